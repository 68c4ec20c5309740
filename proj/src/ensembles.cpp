#include "tsensemble/ensembles.hpp"

#include "tsensemble/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tsens {

namespace {

std::vector<std::string> split_on(std::string_view text, char sep) {
	std::vector<std::string> out;
	std::size_t begin = 0;
	while (true) {
		const auto end = text.find(sep, begin);
		out.emplace_back(text.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin));
		if (end == std::string_view::npos) {
			break;
		}
		begin = end + 1;
	}
	return out;
}

std::string join(const std::vector<std::string> &parts, std::string_view sep) {
	std::string out;
	for (std::size_t i = 0; i < parts.size(); ++i) {
		if (i) out += sep;
		out += parts[i];
	}
	return out;
}

double safe_smape(const Vector &actual, const Vector &forecast) {
	auto v = try_smape(actual, forecast);
	if (v) {
		return *v;
	}
	return (actual - forecast).cwiseAbs().sum() == 0.0 ? 0.0 : kUndefinedErrorPenalty;
}

} // namespace

std::string SelectionStrategy::canonical() const {
	switch (kind) {
	case Kind::all: return "all";
	case Kind::best: return num_best == 3 ? "best" : "best" + std::to_string(num_best);
	case Kind::named: return join(names, "+");
	}
	return "all";
}

SelectionStrategy SelectionStrategy::parse(std::string_view text) {
	if (text == "all") {
		return all();
	}
	if (text.starts_with("best")) {
		const auto rest = text.substr(4);
		if (rest.empty()) {
			return best();
		}
		try {
			const int b = std::stoi(std::string(rest));
			if (b >= 1) {
				return best(b);
			}
		} catch (const std::exception &) {
		}
		throw Error(ErrorCode::ConfigError, "invalid selection strategy '" + std::string(text) + "'");
	}
	if (text.empty()) {
		throw Error(ErrorCode::ConfigError, "empty selection strategy");
	}
	return named(split_on(text, '+'));
}

std::vector<Index> select_models(const std::vector<std::string> &names, const Vector &errors, const SelectionStrategy &strategy) {
	const auto m = static_cast<Index>(names.size());
	if (m == 0) {
		throw Error(ErrorCode::EmptyPool, "cannot select from an empty pool");
	}
	if (errors.size() != m) {
		throw Error(ErrorCode::InvalidArgument, "one validation error per pool member expected");
	}
	std::vector<Index> rows(static_cast<std::size_t>(m));
	std::iota(rows.begin(), rows.end(), Index{0});
	switch (strategy.kind) {
	case SelectionStrategy::Kind::all:
		return rows;
	case SelectionStrategy::Kind::best: {
		if (strategy.num_best < 1) {
			throw Error(ErrorCode::InvalidArgument, "num_best must be at least 1");
		}
		std::sort(rows.begin(), rows.end(), [&](Index a, Index b) {
			if (errors[a] != errors[b]) return errors[a] < errors[b];
			return names[static_cast<std::size_t>(a)] < names[static_cast<std::size_t>(b)];
		});
		rows.resize(std::min<std::size_t>(rows.size(), static_cast<std::size_t>(strategy.num_best)));
		std::sort(rows.begin(), rows.end());
		return rows;
	}
	case SelectionStrategy::Kind::named: {
		std::vector<Index> out;
		for (const auto &n : strategy.names) {
			auto it = std::find(names.begin(), names.end(), n);
			if (it == names.end()) {
				throw Error(ErrorCode::UnknownName, "model '" + n + "' is not in the pool");
			}
			out.push_back(static_cast<Index>(it - names.begin()));
		}
		return out;
	}
	}
	return rows;
}

bool WeightVector::valid(double tol) const {
	return weights.size() == static_cast<Index>(model_ids.size()) && (weights.array() >= 0.0).all() &&
	       std::abs(weights.sum() - 1.0) <= tol;
}

Vector apply_weights(const WeightVector &w, const ForecastMatrix &test) {
	if (w.weights.size() != test.models()) {
		throw Error(ErrorCode::PoolMismatch, "weight vector and forecast matrix disagree in size");
	}
	return test.values.transpose() * w.weights;
}

std::string_view to_string(DetweFormula f) {
	switch (f) {
	case DetweFormula::sqr: return "sqr";
	case DetweFormula::inv: return "inv";
	case DetweFormula::exp: return "exp";
	}
	return "inv";
}

DetweFormula parse_detwe_formula(std::string_view name) {
	if (name == "sqr") return DetweFormula::sqr;
	if (name == "inv") return DetweFormula::inv;
	if (name == "exp") return DetweFormula::exp;
	throw Error(ErrorCode::UnknownName, "unknown combine_detwe formula '" + std::string(name) + "'");
}

Vector detwe_weights(const Vector &errors, DetweFormula formula) {
	if (errors.size() < 1) {
		throw Error(ErrorCode::EmptyPool, "no errors to weight");
	}
	if ((errors.array() < 0.0).any() || !errors.allFinite()) {
		throw Error(ErrorCode::InvalidArgument, "validation errors must be finite and non-negative");
	}
	Vector w(errors.size());
	switch (formula) {
	case DetweFormula::inv:
		w = (errors.array() + kWeightEpsilon).inverse();
		break;
	case DetweFormula::sqr:
		w = (errors.array() + kWeightEpsilon).square().inverse();
		break;
	case DetweFormula::exp: {
		const double mean = errors.mean();
		if (mean > 0.0) {
			w = (-(errors.array() - errors.minCoeff()) / mean).exp().matrix();
		} else {
			w.setOnes();
		}
		break;
	}
	}
	return w / w.sum();
}

WeightedForecast combine_detwe(const Vector &errors, DetweFormula formula, const ForecastMatrix &test) {
	WeightedForecast out;
	out.weights.model_ids = test.model_ids;
	out.weights.weights = detwe_weights(errors, formula);
	out.forecast = apply_weights(out.weights, test);
	return out;
}

Vector mean_average(const ForecastMatrix &test) {
	if (test.models() < 1) {
		throw Error(ErrorCode::EmptyPool, "mean_average needs at least one model");
	}
	return test.values.colwise().mean().transpose();
}

std::vector<std::string> resolve_combo(std::string_view combo) {
	static const std::map<std::string, std::string, std::less<>> legacy{
	    {"ets_arima", "ets_theta"}, {"ets_arima_tbats_theta", "ets_theta_snaive"}, {"ets_arima_tbats", "ets_theta_stlmar"}};
	std::string name(combo);
	if (auto it = legacy.find(combo); it != legacy.end()) {
		warn("fixed combination " + name + " remapped to " + it->second);
		name = it->second;
	}
	auto parts = split_on(name, '_');
	for (const auto &p : parts) {
		if (!parse_base_model(p)) {
			std::string hint = "; available: naive, snaive, rwdrift, theta, ets, stlmar, meanf";
			if (p == "arima" || p == "tbats") {
				hint += " (" + p + " is not part of the pool; ets_arima maps to ets_theta, ets_arima_tbats_theta to "
				        "ets_theta_snaive, ets_arima_tbats to ets_theta_stlmar)";
			}
			throw Error(ErrorCode::UnknownName, "unknown model '" + p + "' in fixed combination '" + std::string(combo) + "'" + hint);
		}
	}
	return parts;
}

Vector algo_algo(std::string_view combo, const ForecastMatrix &test) {
	std::vector<Index> rows;
	for (const auto &name : resolve_combo(combo)) {
		auto r = test.find(name);
		if (!r) {
			throw Error(ErrorCode::UnknownName, "model '" + name + "' of fixed combination '" + std::string(combo) + "' is not in the pool");
		}
		rows.push_back(*r);
	}
	return mean_average(test.subset(rows));
}

// ---------------------------------------------------------------------------
// Stacking

std::vector<std::pair<Index, Index>> time_series_folds(Index n, int folds) {
	if (folds < 1) {
		throw Error(ErrorCode::InvalidArgument, "at least one fold is required");
	}
	const Index size = n / (folds + 1);
	if (size < 1 || n - folds * size < 2) {
		throw Error(ErrorCode::SeriesTooShort, "series of length " + std::to_string(n) + " cannot host " + std::to_string(folds) + " expanding-window folds");
	}
	std::vector<std::pair<Index, Index>> out;
	for (int i = 0; i < folds; ++i) {
		out.emplace_back(n - (folds - i) * size, size);
	}
	return out;
}

OofPredictions stacking_oof(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                            const SeasonalityInfo &seasonality, int folds) {
	if (pool.empty()) {
		throw Error(ErrorCode::EmptyPool, "stacking needs a non-empty pool");
	}
	const auto layout = time_series_folds(train.size(), folds);
	const Index size = layout.front().second;
	const Index rows = size * folds;
	OofPredictions out;
	out.fold_size = size;
	std::vector<Vector> columns;
	for (auto model : pool) {
		Vector col(rows);
		bool ok = true;
		for (int f = 0; f < folds && ok; ++f) {
			const Index start = layout[static_cast<std::size_t>(f)].first;
			try {
				auto fit = fit_base_model(model, train.head(start), size, seasonality);
				col.segment(f * size, size) = fit.forecast;
			} catch (const std::exception &e) {
				warn("stacking: " + std::string(to_string(model)) + " left out, fold " + std::to_string(f) + ": " + e.what());
				ok = false;
			}
		}
		if (ok) {
			out.model_ids.emplace_back(to_string(model));
			columns.push_back(std::move(col));
		}
	}
	if (columns.empty()) {
		throw Error(ErrorCode::EmptyPool, "every base model failed on the stacking folds");
	}
	out.values.resize(rows, static_cast<Index>(columns.size()));
	for (std::size_t c = 0; c < columns.size(); ++c) {
		out.values.col(static_cast<Index>(c)) = columns[c];
	}
	out.actual.resize(rows);
	for (int f = 0; f < folds; ++f) {
		const Index start = layout[static_cast<std::size_t>(f)].first;
		out.fold_start.push_back(start);
		for (Index i = 0; i < size; ++i) {
			out.actual[f * size + i] = train[start + i];
			out.fold.push_back(f);
			out.time.push_back(start + i);
		}
	}
	return out;
}

namespace {

Matrix test_features(const std::vector<std::string> &ids, const ForecastMatrix &test) {
	Matrix x(test.horizon(), static_cast<Index>(ids.size()));
	for (std::size_t c = 0; c < ids.size(); ++c) {
		auto r = test.find(ids[c]);
		if (!r) {
			throw Error(ErrorCode::PoolMismatch, "model '" + ids[c] + "' has no test-horizon forecast");
		}
		x.col(static_cast<Index>(c)) = test.values.row(*r).transpose();
	}
	return x;
}

} // namespace

Vector stack_with_oof(const OofPredictions &oof, const ForecastMatrix &test, MetaModelKind meta, std::uint64_t seed) {
	auto model = fit_regressor(meta, oof.values, oof.actual, seed);
	return model.predict(test_features(oof.model_ids, test));
}

Vector ensemble_stacking(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                         const SeasonalityInfo &seasonality, const ForecastMatrix &test, MetaModelKind meta,
                         std::uint64_t seed, int folds) {
	return stack_with_oof(stacking_oof(pool, train, seasonality, folds), test, meta, seed);
}

StackingBasic ensemble_stacking_basic(const ForecastMatrix &evalid, const Eigen::Ref<const Vector> &evalid_actual,
                                      const ForecastMatrix &test, MetaModelKind meta, std::uint64_t seed) {
	if (evalid.horizon() < 2) {
		throw Error(ErrorCode::SeriesTooShort, "stacking_basic needs at least 2 validation points");
	}
	if (evalid_actual.size() != evalid.horizon()) {
		throw Error(ErrorCode::InvalidArgument, "validation actuals and predictions disagree in length");
	}
	StackingBasic out{fit_regressor(meta, evalid.values.transpose(), evalid_actual, seed), {}};
	out.forecast = out.meta.predict(test_features(evalid.model_ids, test));
	return out;
}

// ---------------------------------------------------------------------------
// Greedy selection

ScoreFn smape_score() {
	return [](const Vector &a, const Vector &f) { return safe_smape(a, f); };
}

ScoreFn mse_score() {
	return [](const Vector &a, const Vector &f) { return mean_squared_error(a, f); };
}

ScoreFn mae_score() {
	return [](const Vector &a, const Vector &f) { return mean_absolute_error(a, f); };
}

ForwardSelection ensemble_model_selection(const Matrix &evalid, const Vector &actual, bool sort, int max_iter,
                                          const ScoreFn &score, const std::vector<std::string> &ids) {
	const Index m = evalid.rows();
	if (m < 1) {
		throw Error(ErrorCode::EmptyPool, "forward selection needs a non-empty pool");
	}
	if (evalid.cols() != actual.size()) {
		throw Error(ErrorCode::InvalidArgument, "validation actuals and predictions disagree in length");
	}
	Vector single(m);
	for (Index i = 0; i < m; ++i) {
		single[i] = score(actual, evalid.row(i).transpose());
	}
	std::vector<Index> order(static_cast<std::size_t>(m));
	std::iota(order.begin(), order.end(), Index{0});
	std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return single[a] < single[b]; });
	std::vector<Index> candidates = order;
	if (sort) {
		candidates.resize(static_cast<std::size_t>((m + 1) / 2));
	}
	std::sort(candidates.begin(), candidates.end());

	ForwardSelection out;
	out.counts.assign(static_cast<std::size_t>(m), 0);
	const Index first = order.front();
	out.counts[static_cast<std::size_t>(first)] = 1;
	Vector sum = evalid.row(first).transpose();
	double total = 1.0;
	double current = single[first];
	out.trace.push_back(current);
	for (int iter = 0; iter < max_iter; ++iter) {
		Index pick = -1;
		double pick_err = current;
		for (Index c : candidates) {
			const Vector trial = (sum + evalid.row(c).transpose()) / (total + 1.0);
			const double e = score(actual, trial);
			if (e < pick_err) {
				pick_err = e;
				pick = c;
			}
		}
		if (pick < 0) {
			break;
		}
		sum += evalid.row(pick).transpose();
		total += 1.0;
		++out.counts[static_cast<std::size_t>(pick)];
		current = pick_err;
		out.trace.push_back(current);
	}
	out.weights.weights.resize(m);
	for (Index i = 0; i < m; ++i) {
		out.weights.weights[i] = out.counts[static_cast<std::size_t>(i)] / total;
		out.weights.model_ids.push_back(ids.empty() ? "m" + std::to_string(i) : ids.at(static_cast<std::size_t>(i)));
	}
	return out;
}

BagSelection ensemble_selection_bags(const ForecastMatrix &evalid, const Eigen::Ref<const Vector> &actual,
                                     const ForecastMatrix &test, int period, const ScoreFn &score) {
	if (period < 2) {
		throw Error(ErrorCode::NoSeasonality, "selection bags need a seasonal period");
	}
	if (evalid.model_ids != test.model_ids) {
		throw Error(ErrorCode::PoolMismatch, "validation and test matrices list different models");
	}
	const Vector y = actual;
	const auto global = ensemble_model_selection(evalid.values, y, false, kForwardMaxIter, score, evalid.model_ids);
	BagSelection out;
	out.period = period;
	for (int b = 0; b < period; ++b) {
		std::vector<Index> cols;
		for (Index i = 0; i < evalid.horizon(); ++i) {
			if ((evalid.horizon_start + i) % period == b) {
				cols.push_back(i);
			}
		}
		if (cols.empty()) {
			out.bag_weights.push_back(global.weights);
			out.fallback.push_back(true);
			continue;
		}
		Matrix sub(evalid.models(), static_cast<Index>(cols.size()));
		Vector ys(static_cast<Index>(cols.size()));
		for (std::size_t c = 0; c < cols.size(); ++c) {
			sub.col(static_cast<Index>(c)) = evalid.values.col(cols[c]);
			ys[static_cast<Index>(c)] = y[cols[c]];
		}
		out.bag_weights.push_back(ensemble_model_selection(sub, ys, false, kForwardMaxIter, score, evalid.model_ids).weights);
		out.fallback.push_back(false);
	}
	out.forecast.resize(test.horizon());
	for (Index k = 0; k < test.horizon(); ++k) {
		const auto b = static_cast<std::size_t>((test.horizon_start + k) % period);
		out.forecast[k] = test.values.col(k).dot(out.bag_weights[b].weights);
	}
	return out;
}

BackwardElimination backward_eliminate(const Matrix &evalid, const Vector &actual, const Vector &member_errors) {
	const Index m = evalid.rows();
	if (m < 1 || member_errors.size() != m) {
		throw Error(ErrorCode::InvalidArgument, "backward elimination needs one error per member");
	}
	BackwardElimination out;
	out.survivors.resize(static_cast<std::size_t>(m));
	std::iota(out.survivors.begin(), out.survivors.end(), Index{0});
	auto mean_error = [&](const std::vector<Index> &rows) {
		Vector mean = Vector::Zero(evalid.cols());
		for (Index r : rows) mean += evalid.row(r).transpose();
		return safe_smape(actual, mean / static_cast<double>(rows.size()));
	};
	double current = mean_error(out.survivors);
	out.trace.push_back(current);
	while (out.survivors.size() > 1) {
		auto worst = out.survivors.begin();
		for (auto it = out.survivors.begin(); it != out.survivors.end(); ++it) {
			if (member_errors[*it] > member_errors[*worst]) worst = it;
		}
		std::vector<Index> trial = out.survivors;
		trial.erase(trial.begin() + (worst - out.survivors.begin()));
		const double e = mean_error(trial);
		if (!(e < current)) {
			break;
		}
		out.survivors = std::move(trial);
		current = e;
		out.trace.push_back(current);
	}
	return out;
}

// ---------------------------------------------------------------------------
// FFORMA

Eigen::RowVectorXd FformaModel::weights(const Eigen::Ref<const Eigen::RowVectorXd> &features) const {
	if (features.size() != static_cast<Index>(feature_names.size())) {
		throw Error(ErrorCode::FeatureVersionMismatch, "fforma feature row has the wrong width");
	}
	const Matrix row = features;
	return softmax(booster.raw_scores(row).row(0));
}

FformaModel fforma_train(const Matrix &features, const Matrix &errors, std::vector<std::string> model_ids,
                         std::vector<std::string> feature_names, const GbtParams &params) {
	if (features.rows() < kFformaMinCorpus) {
		throw Error(ErrorCode::CorpusTooSmall, "fforma needs at least " + std::to_string(kFformaMinCorpus) + " series, got " + std::to_string(features.rows()));
	}
	if (errors.rows() != features.rows() || errors.cols() != static_cast<Index>(model_ids.size()) ||
	    features.cols() != static_cast<Index>(feature_names.size())) {
		throw Error(ErrorCode::PoolMismatch, "fforma corpus matrices disagree in shape");
	}
	FformaModel m;
	m.model_ids = std::move(model_ids);
	m.feature_names = std::move(feature_names);
	const double mean = errors.mean();
	m.error_scale = mean > 0.0 ? mean : 1.0;
	m.booster = fit_gbt(features, SoftmaxWeightedError(errors / m.error_scale), params);
	return m;
}

WeightedForecast fforma_apply(const FformaModel &model, const Eigen::Ref<const Eigen::RowVectorXd> &features,
                              const ForecastMatrix &test) {
	if (test.model_ids != model.model_ids) {
		throw Error(ErrorCode::PoolMismatch, "fforma was trained on pool [" + join(model.model_ids, ",") + "] but got [" + join(test.model_ids, ",") + "]");
	}
	WeightedForecast out;
	out.weights.model_ids = model.model_ids;
	out.weights.weights = model.weights(features).transpose();
	out.forecast = apply_weights(out.weights, test);
	return out;
}

nlohmann::json to_json(const FformaModel &m) {
	return {{"type", "fforma"}, {"models", m.model_ids}, {"features", m.feature_names}, {"error_scale", m.error_scale},
	        {"booster", to_json(m.booster)}};
}

FformaModel fforma_from_json(const nlohmann::json &j) {
	FformaModel m;
	m.model_ids = j.at("models").get<std::vector<std::string>>();
	m.feature_names = j.at("features").get<std::vector<std::string>>();
	m.error_scale = j.at("error_scale").get<double>();
	m.booster = booster_from_json(j.at("booster"));
	return m;
}

// ---------------------------------------------------------------------------
// Recent ensemble

Index recent_keep_count(int lambda_pct, Index pool_size) {
	const Index k = (static_cast<Index>(lambda_pct) * pool_size + 99) / 100;
	return std::clamp<Index>(k, 1, std::max<Index>(pool_size, 1));
}

RecentEnsemble recent_ensemble(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                               const SeasonalityInfo &seasonality, const RecentConfig &config, const ForecastMatrix &test) {
	const Index n = train.size();
	if (config.p < 1 || config.p > n - 2) {
		throw Error(ErrorCode::SeriesTooShort, "recent_ensemble with P=" + std::to_string(config.p) + " needs at least " + std::to_string(config.p + 2) + " training points");
	}
	if (pool.empty()) {
		throw Error(ErrorCode::EmptyPool, "recent_ensemble needs a non-empty pool");
	}
	const Index p = config.p;
	const Vector recent = train.tail(p);
	std::vector<std::pair<double, Index>> scored;
	RecentEnsemble out;
	out.recent_error = Vector::Constant(static_cast<Index>(pool.size()), std::numeric_limits<double>::quiet_NaN());
	for (std::size_t i = 0; i < pool.size(); ++i) {
		const std::string name(to_string(pool[i]));
		if (!test.find(name)) {
			continue;
		}
		try {
			auto fit = fit_base_model(pool[i], train.head(n - p), p, seasonality);
			double s = 0.0;
			for (Index k = 0; k < p; ++k) {
				try {
					s += sape(recent[k], fit.forecast[k]);
				} catch (const Error &) {
					s += kSapeFallback;
				}
			}
			s /= static_cast<double>(p);
			out.recent_error[static_cast<Index>(i)] = s;
			scored.emplace_back(s, static_cast<Index>(i));
		} catch (const std::exception &e) {
			warn("recent_ensemble: " + name + " left out: " + e.what());
		}
	}
	if (scored.empty()) {
		throw Error(ErrorCode::EmptyPool, "no base model could be scored on the recent window");
	}
	std::stable_sort(scored.begin(), scored.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
	const Index keep = std::min<Index>(recent_keep_count(config.lambda_pct, static_cast<Index>(pool.size())), static_cast<Index>(scored.size()));
	scored.resize(static_cast<std::size_t>(keep));
	std::sort(scored.begin(), scored.end(), [](const auto &a, const auto &b) { return a.second < b.second; });
	std::vector<Index> rows;
	Vector w(keep);
	for (Index k = 0; k < keep; ++k) {
		const auto &[s, i] = scored[static_cast<std::size_t>(k)];
		rows.push_back(*test.find(to_string(pool[static_cast<std::size_t>(i)])));
		w[k] = 1.0 / (s + kWeightEpsilon);
	}
	const auto sub = test.subset(rows);
	out.result.weights.model_ids = sub.model_ids;
	out.result.weights.weights = w / w.sum();
	out.result.forecast = apply_weights(out.result.weights, sub);
	return out;
}

// ---------------------------------------------------------------------------
// Superbooster

SuperboosterAugmentation augment_targets(const Eigen::Ref<const Vector> &y_etrain, const Eigen::Ref<const Vector> &y_evalid,
                                         const Eigen::Ref<const Vector> &yhat_evalid, bool noise, Rng &rng, double alpha) {
	if (y_evalid.size() != yhat_evalid.size() || y_evalid.size() < 1) {
		throw Error(ErrorCode::InvalidArgument, "validation actuals and predictions disagree in length");
	}
	SuperboosterAugmentation a;
	a.alpha = alpha;
	a.l = y_etrain.size();
	a.v = y_evalid.size();
	a.delta_y = (yhat_evalid - y_evalid).cwiseAbs().mean();
	a.y_noisy = y_etrain;
	if (noise) {
		const double sd = std::sqrt(a.delta_y);
		for (Index i = 0; i < a.l; ++i) {
			a.y_noisy[i] += alpha * sd * rng.normal();
		}
	}
	a.y_extended.resize(a.l + a.v);
	a.y_extended << a.y_noisy, y_evalid;
	return a;
}

SuperboosterResult superbooster(const SuperboosterInput &in) {
	if (!in.pool || !in.train) {
		throw Error(ErrorCode::InvalidArgument, "superbooster needs a fitted pool and the training series");
	}
	const PoolFit &pool = *in.pool;
	const Vector &y = *in.train;
	if (in.base < 0 || in.base >= pool.size()) {
		throw Error(ErrorCode::InvalidArgument, "superbooster base row out of range");
	}
	const auto &efit = pool.etrain_fits[static_cast<std::size_t>(in.base)];
	const Index le = pool.split.etrain_size();
	const Index v = pool.split.evalid_size();
	const Index n = y.size();
	const Index h = pool.test.horizon();
	std::vector<Index> etrain_rows;
	for (Index t = efit.warmup; t < le; ++t) {
		if (std::isfinite(efit.fitted[t])) {
			etrain_rows.push_back(t);
		}
	}
	const auto l = static_cast<Index>(etrain_rows.size());
	const Index q = in.exogenous ? in.exogenous->values.cols() : 0;
	if (in.exogenous && in.exogenous->values.rows() != n + h) {
		throw Error(ErrorCode::InvalidArgument, "exogenous frame must cover training and test steps");
	}
	auto fill = [&](Matrix &x, Index row, Index t, double base) {
		x(row, 0) = base;
		for (Index c = 0; c < q; ++c) {
			x(row, 1 + c) = in.exogenous->values(t, c);
		}
	};
	Matrix x(l + v, 1 + q);
	Vector y_etrain(l);
	for (Index i = 0; i < l; ++i) {
		const Index t = etrain_rows[static_cast<std::size_t>(i)];
		fill(x, i, t, efit.fitted[t]);
		y_etrain[i] = y[t];
	}
	const Vector yhat_evalid = pool.evalid.values.row(in.base).transpose();
	for (Index i = 0; i < v; ++i) {
		fill(x, l + i, le + i, yhat_evalid[i]);
	}
	Rng rng(derive_seed(in.seed, "noise"));
	SuperboosterResult out;
	out.augmentation = augment_targets(y_etrain, y.tail(v), yhat_evalid, in.noise, rng);
	out.rows = l + v;
	auto model = fit_regressor(in.meta, x, out.augmentation.y_extended, derive_seed(in.seed, "meta"));
	Matrix xt(h, 1 + q);
	const Vector base_test = pool.test.values.row(in.base).transpose();
	for (Index k = 0; k < h; ++k) {
		fill(xt, k, n + k, base_test[k]);
	}
	out.forecast = model.predict(xt);
	return out;
}

// ---------------------------------------------------------------------------
// Specs

std::string_view to_string(EnsembleMethod m) {
	switch (m) {
	case EnsembleMethod::combine_detwe: return "combine_detwe";
	case EnsembleMethod::ensemble_stacking: return "ensemble_stacking";
	case EnsembleMethod::ensemble_stacking_basic: return "ensemble_stacking_basic";
	case EnsembleMethod::ensemble_model_selection: return "ensemble_model_selection";
	case EnsembleMethod::ensemble_selection_bags: return "ensemble_selection_bags";
	case EnsembleMethod::ensemble_backward_elimination: return "ensemble_backward_elimination";
	case EnsembleMethod::fforma: return "fforma";
	case EnsembleMethod::recent_ensemble: return "recent_ensemble";
	case EnsembleMethod::superbooster: return "superbooster";
	case EnsembleMethod::mean_average: return "mean_average";
	case EnsembleMethod::algo_algo: return "algo_algo";
	}
	return "mean_average";
}

namespace {

constexpr std::array kMethods{
    EnsembleMethod::combine_detwe,          EnsembleMethod::ensemble_stacking,
    EnsembleMethod::ensemble_stacking_basic, EnsembleMethod::ensemble_model_selection,
    EnsembleMethod::ensemble_selection_bags, EnsembleMethod::ensemble_backward_elimination,
    EnsembleMethod::fforma,                  EnsembleMethod::recent_ensemble,
    EnsembleMethod::superbooster,            EnsembleMethod::mean_average,
    EnsembleMethod::algo_algo,
};

struct ParamRule {
	std::string key;
	std::vector<std::string> values;
	std::string fallback;
};

std::vector<ParamRule> rules_for(EnsembleMethod m) {
	const std::vector<std::string> metas{"linreg", "rf", "gbt"};
	switch (m) {
	case EnsembleMethod::combine_detwe: return {{"formula", {"sqr", "inv", "exp"}, "inv"}};
	case EnsembleMethod::ensemble_stacking:
	case EnsembleMethod::ensemble_stacking_basic: return {{"meta", metas, "linreg"}};
	case EnsembleMethod::ensemble_model_selection: return {{"sort", {"true", "false"}, "false"}};
	case EnsembleMethod::ensemble_selection_bags:
		return {{"metric", {"mean_squared_error", "mean_absolute_error"}, "mean_squared_error"}};
	case EnsembleMethod::ensemble_backward_elimination:
		return {{"combination", {"weighted_average", "stacking"}, "weighted_average"}, {"meta", metas, "linreg"}};
	case EnsembleMethod::recent_ensemble: return {{"P", {"20", "50"}, "20"}, {"lambda", {"20", "30", "50"}, "50"}};
	case EnsembleMethod::superbooster: return {{"noise", {"true", "false"}, "false"}, {"meta", metas, "gbt"}};
	case EnsembleMethod::algo_algo: return {{"combo", {}, "ets_theta"}};
	case EnsembleMethod::fforma:
	case EnsembleMethod::mean_average: return {};
	}
	return {};
}

int parse_int(const std::string &s, const std::string &what) {
	try {
		std::size_t used = 0;
		const int v = std::stoi(s, &used);
		if (used == s.size()) {
			return v;
		}
	} catch (const std::exception &) {
	}
	throw Error(ErrorCode::ConfigError, what + " must be an integer, got '" + s + "'");
}

} // namespace

EnsembleMethod parse_method(std::string_view name) {
	for (auto m : kMethods) {
		if (to_string(m) == name) {
			return m;
		}
	}
	throw Error(ErrorCode::UnknownName, "unknown ensemble method '" + std::string(name) + "'");
}

std::string EnsembleSpec::canonical() const {
	std::string out(to_string(method));
	if (!params.empty()) {
		std::vector<std::string> kv;
		for (const auto &[k, v] : params) {
			kv.push_back(k + "=" + v);
		}
		out += "(" + join(kv, ",") + ")";
	}
	return out + "|sel=" + selection.canonical();
}

const std::string &EnsembleSpec::param(const std::string &key) const {
	auto it = params.find(key);
	if (it == params.end()) {
		throw Error(ErrorCode::ConfigError, "spec " + canonical() + " lacks parameter '" + key + "'");
	}
	return it->second;
}

EnsembleSpec parse_spec(std::string_view text) {
	EnsembleSpec spec;
	std::string_view head = text;
	std::string_view sel = "all";
	if (auto bar = text.find('|'); bar != std::string_view::npos) {
		head = text.substr(0, bar);
		auto tail = text.substr(bar + 1);
		if (!tail.starts_with("sel=")) {
			throw Error(ErrorCode::ConfigError, "expected '|sel=' in spec '" + std::string(text) + "'");
		}
		sel = tail.substr(4);
	}
	std::string_view method = head;
	std::string_view args;
	if (auto open = head.find('('); open != std::string_view::npos) {
		if (!head.ends_with(")")) {
			throw Error(ErrorCode::ConfigError, "unbalanced parentheses in spec '" + std::string(text) + "'");
		}
		method = head.substr(0, open);
		args = head.substr(open + 1, head.size() - open - 2);
	}
	spec.method = parse_method(method);
	spec.selection = SelectionStrategy::parse(sel);
	std::map<std::string, std::string> given;
	if (!args.empty()) {
		for (const auto &kv : split_on(args, ',')) {
			auto eq = kv.find('=');
			if (eq == std::string::npos) {
				throw Error(ErrorCode::ConfigError, "expected key=value in spec '" + std::string(text) + "'");
			}
			given[kv.substr(0, eq)] = kv.substr(eq + 1);
		}
	}
	for (auto &[k, v] : given) {
		if (k == "meta") {
			v = std::string(to_string(parse_meta_model(v)));
		}
	}
	for (const auto &rule : rules_for(spec.method)) {
		auto it = given.find(rule.key);
		std::string value = it == given.end() ? rule.fallback : it->second;
		if (!rule.values.empty() && std::find(rule.values.begin(), rule.values.end(), value) == rule.values.end()) {
			throw Error(ErrorCode::ConfigError, "invalid value '" + value + "' for " + rule.key + " in spec '" + std::string(text) + "'");
		}
		spec.params[rule.key] = value;
		if (it != given.end()) {
			given.erase(it);
		}
	}
	if (!given.empty()) {
		throw Error(ErrorCode::ConfigError, "unknown parameter '" + given.begin()->first + "' in spec '" + std::string(text) + "'");
	}
	if (spec.method == EnsembleMethod::ensemble_backward_elimination && spec.params["combination"] == "weighted_average") {
		spec.params.erase("meta");
	}
	if (spec.method == EnsembleMethod::algo_algo) {
		const auto parts = resolve_combo(spec.params["combo"]);
		spec.params["combo"] = join(parts, "_");
	}
	if (spec.method == EnsembleMethod::superbooster && spec.selection.kind == SelectionStrategy::Kind::named &&
	    spec.selection.names.size() != 1) {
		throw Error(ErrorCode::ConfigError, "superbooster builds on exactly one base model");
	}
	return spec;
}

std::vector<EnsembleSpec> default_grid() {
	std::vector<std::string> specs;
	const std::vector<std::string> two_sel{"all", "best"};
	const std::vector<std::string> metas{"linreg", "rf", "gbt"};
	for (const auto &f : {"exp", "inv", "sqr"})
		for (const auto &s : two_sel) specs.push_back(std::string("combine_detwe(formula=") + f + ")|sel=" + s);
	for (const auto &method : {"ensemble_stacking", "ensemble_stacking_basic"})
		for (const auto &m : metas)
			for (const auto &s : two_sel) specs.push_back(std::string(method) + "(meta=" + m + ")|sel=" + s);
	for (const auto &v : {"false", "true"})
		for (const auto &s : two_sel) specs.push_back(std::string("ensemble_model_selection(sort=") + v + ")|sel=" + s);
	for (const auto &v : {"mean_absolute_error", "mean_squared_error"})
		for (const auto &s : two_sel) specs.push_back(std::string("ensemble_selection_bags(metric=") + v + ")|sel=" + s);
	specs.push_back("ensemble_backward_elimination(combination=weighted_average)|sel=all");
	for (const auto &m : metas) specs.push_back("ensemble_backward_elimination(combination=stacking,meta=" + m + ")|sel=all");
	specs.push_back("fforma|sel=all");
	for (const auto &p : {"20", "50"})
		for (const auto &l : {"20", "30", "50"})
			specs.push_back(std::string("recent_ensemble(P=") + p + ",lambda=" + l + ")|sel=all");
	for (const auto &n : {"false", "true"})
		for (const auto &s : {"best", "naive", "theta"})
			specs.push_back(std::string("superbooster(meta=gbt,noise=") + n + ")|sel=" + s);
	for (const auto &s : two_sel) specs.push_back("mean_average|sel=" + s);
	for (const auto &c : {"ets_theta", "ets_theta_snaive", "ets_theta_stlmar"})
		specs.push_back(std::string("algo_algo(combo=") + c + ")|sel=all");
	std::vector<EnsembleSpec> out;
	for (const auto &s : specs) {
		out.push_back(parse_spec(s));
	}
	return out;
}

// ---------------------------------------------------------------------------
// Context and dispatch

EnsembleContext::EnsembleContext(const std::vector<BaseModel> &pool, Vector train, PoolFit fit,
                                 const ExogenousFrame *exogenous, std::uint64_t seed)
    : pool_(pool), train_(std::move(train)), fit_(std::move(fit)), exogenous_(exogenous), seed_(seed) {}

Vector EnsembleContext::evalid_actual() const {
	return train_.tail(fit_.split.evalid_size());
}

void EnsembleContext::set_fforma(const FformaModel *model, Eigen::RowVectorXd features) {
	fforma_ = model;
	fforma_features_ = std::move(features);
}

std::vector<BaseModel> EnsembleContext::models_at(const std::vector<Index> &rows) const {
	std::vector<BaseModel> out;
	for (Index r : rows) {
		out.push_back(*parse_base_model(fit_.evalid.model_ids.at(static_cast<std::size_t>(r))));
	}
	return out;
}

const OofPredictions &EnsembleContext::oof(const std::vector<Index> &rows) {
	auto &slot = oof_cache_[rows];
	if (!slot) {
		slot = std::make_unique<OofPredictions>(stacking_oof(models_at(rows), train_, fit_.seasonality));
	}
	return *slot;
}

const RecentEnsemble &EnsembleContext::recent(const RecentConfig &config) {
	auto &slot = recent_cache_[{config.p, config.lambda_pct}];
	if (!slot) {
		std::vector<Index> all(static_cast<std::size_t>(fit_.size()));
		std::iota(all.begin(), all.end(), Index{0});
		slot = std::make_unique<RecentEnsemble>(recent_ensemble(models_at(all), train_, fit_.seasonality, config, fit_.test));
	}
	return *slot;
}

EnsembleOutput run_ensemble(const EnsembleSpec &spec, EnsembleContext &ctx) {
	const PoolFit &fit = ctx.fit();
	const auto names = fit.names();
	const Vector errors = fit.training_errors();
	const std::uint64_t seed = derive_seed(ctx.seed(), spec.canonical());
	auto chosen = [&]() { return select_models(names, errors, spec.selection); };
	auto errors_at = [&](const std::vector<Index> &rows) {
		Vector e(static_cast<Index>(rows.size()));
		for (std::size_t i = 0; i < rows.size(); ++i) e[static_cast<Index>(i)] = errors[rows[i]];
		return e;
	};
	EnsembleOutput out;
	switch (spec.method) {
	case EnsembleMethod::combine_detwe: {
		const auto rows = chosen();
		auto r = combine_detwe(errors_at(rows).cwiseMin(kUndefinedErrorPenalty), parse_detwe_formula(spec.param("formula")), fit.test.subset(rows));
		out.forecast = r.forecast;
		out.weights = r.weights;
		break;
	}
	case EnsembleMethod::ensemble_stacking: {
		const auto &oof = ctx.oof(chosen());
		out.forecast = stack_with_oof(oof, fit.test, parse_meta_model(spec.param("meta")), seed);
		break;
	}
	case EnsembleMethod::ensemble_stacking_basic: {
		const auto rows = chosen();
		out.forecast = ensemble_stacking_basic(fit.evalid.subset(rows), ctx.evalid_actual(), fit.test.subset(rows),
		                                       parse_meta_model(spec.param("meta")), seed)
		                   .forecast;
		break;
	}
	case EnsembleMethod::ensemble_model_selection: {
		const auto rows = chosen();
		const auto ev = fit.evalid.subset(rows);
		auto r = ensemble_model_selection(ev.values, ctx.evalid_actual(), spec.param("sort") == "true", kForwardMaxIter,
		                                  smape_score(), ev.model_ids);
		out.forecast = apply_weights(r.weights, fit.test.subset(rows));
		out.weights = r.weights;
		break;
	}
	case EnsembleMethod::ensemble_selection_bags: {
		const auto rows = chosen();
		const auto score = spec.param("metric") == "mean_absolute_error" ? mae_score() : mse_score();
		out.forecast = ensemble_selection_bags(fit.evalid.subset(rows), ctx.evalid_actual(), fit.test.subset(rows),
		                                       fit.seasonality.primary_period.value_or(0), score)
		                   .forecast;
		break;
	}
	case EnsembleMethod::ensemble_backward_elimination: {
		const auto rows = chosen();
		const auto ev = fit.evalid.subset(rows);
		auto r = backward_eliminate(ev.values, ctx.evalid_actual(), errors_at(rows));
		std::vector<Index> survivors;
		for (Index s : r.survivors) survivors.push_back(rows[static_cast<std::size_t>(s)]);
		if (spec.param("combination") == "stacking") {
			out.forecast = stack_with_oof(ctx.oof(survivors), fit.test, parse_meta_model(spec.param("meta")), seed);
		} else {
			const auto sub = fit.test.subset(survivors);
			WeightVector w{sub.model_ids, Vector::Constant(sub.models(), 1.0 / static_cast<double>(sub.models()))};
			out.forecast = apply_weights(w, sub);
			out.weights = w;
		}
		break;
	}
	case EnsembleMethod::fforma: {
		if (!ctx.fforma_model()) {
			throw Error(ErrorCode::CorpusTooSmall, "no corpus-level fforma model is available");
		}
		auto r = fforma_apply(*ctx.fforma_model(), ctx.fforma_features(), fit.test.subset(chosen()));
		out.forecast = r.forecast;
		out.weights = r.weights;
		break;
	}
	case EnsembleMethod::recent_ensemble: {
		const RecentConfig config{parse_int(spec.param("P"), "P"), parse_int(spec.param("lambda"), "lambda")};
		const auto &r = ctx.recent(config);
		out.forecast = r.result.forecast;
		out.weights = r.result.weights;
		break;
	}
	case EnsembleMethod::superbooster: {
		auto sel = spec.selection;
		if (sel.kind == SelectionStrategy::Kind::best) {
			sel.num_best = 1;
		}
		const auto rows = select_models(names, errors, sel);
		Index base = rows.front();
		if (sel.kind == SelectionStrategy::Kind::best) {
			// select_models returns pool order; pick the lowest error among them.
			for (Index r : rows) {
				if (errors[r] < errors[base]) base = r;
			}
		}
		SuperboosterInput in;
		in.base = base;
		in.pool = &fit;
		in.train = &ctx.train();
		in.exogenous = ctx.exogenous();
		in.noise = spec.param("noise") == "true";
		in.meta = parse_meta_model(spec.param("meta"));
		in.seed = seed;
		out.forecast = superbooster(in).forecast;
		break;
	}
	case EnsembleMethod::mean_average:
		out.forecast = mean_average(fit.test.subset(chosen()));
		break;
	case EnsembleMethod::algo_algo:
		out.forecast = algo_algo(spec.param("combo"), fit.test);
		break;
	}
	if (!out.forecast.allFinite()) {
		throw Error(ErrorCode::InvalidArgument, spec.canonical() + " produced a non-finite forecast");
	}
	return out;
}

} // namespace tsens
