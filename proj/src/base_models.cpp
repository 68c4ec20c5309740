#include "tsensemble/base_models.hpp"

#include "tsensemble/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace tsens {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_length(const Eigen::Ref<const Vector> &y, Index n, std::string_view what) {
	if (y.size() < n) {
		throw Error(ErrorCode::SeriesTooShort, std::string(what) + " needs at least " + std::to_string(n) + " observations, got " + std::to_string(y.size()));
	}
}

void require_horizon(Index h) {
	if (h < 0) {
		throw Error(ErrorCode::InvalidArgument, "forecast horizon must be non-negative");
	}
}

std::vector<double> grid(double lo, double hi, double step) {
	std::vector<double> g;
	for (int i = 0;; ++i) {
		const double v = lo + step * i;
		if (v > hi + 1e-12) {
			break;
		}
		g.push_back(std::round(v * 1e6) / 1e6);
	}
	return g;
}

// Grid searches only move on a clear improvement, so rounding noise (say from
// shifting the series) cannot flip the choice between near-tied settings.
bool improves(double candidate, double incumbent) {
	return std::isfinite(incumbent) ? candidate < incumbent - 1e-10 * std::fabs(incumbent) : candidate < incumbent;
}

const std::vector<double> &alpha_grid() {
	static const auto g = grid(0.05, 1.0, 0.05);
	return g;
}

const std::vector<double> &beta_grid() {
	static const auto g = grid(0.05, 0.95, 0.05);
	return g;
}

const std::vector<double> &phi_grid() {
	static const std::vector<double> g{0.8, 0.85, 0.9, 0.95, 0.98};
	return g;
}

// Simple exponential smoothing with level initialised at y[0].
struct SesResult {
	double alpha = 1.0;
	double level = 0.0;
	Vector fitted;
};

SesResult ses_run(const Eigen::Ref<const Vector> &y, double alpha) {
	SesResult r;
	r.alpha = alpha;
	r.fitted = Vector::Constant(y.size(), kNaN);
	double level = y[0];
	for (Index t = 1; t < y.size(); ++t) {
		r.fitted[t] = level;
		level += alpha * (y[t] - level);
	}
	r.level = level;
	return r;
}

SesResult ses_fit(const Eigen::Ref<const Vector> &y) {
	SesResult best;
	double best_sse = std::numeric_limits<double>::infinity();
	for (double a : alpha_grid()) {
		auto r = ses_run(y, a);
		const double sse = (y.tail(y.size() - 1) - r.fitted.tail(y.size() - 1)).squaredNorm();
		if (improves(sse, best_sse)) {
			best_sse = sse;
			best = std::move(r);
		}
	}
	return best;
}

// ---------------------------------------------------------------------------
// Exponential smoothing family

struct EtsParams {
	double alpha = 0.5;
	double beta = 0.1;
	double gamma = 0.1;
	double phi = 0.9;
};

bool has_trend(EtsKind k) {
	return k != EtsKind::ses;
}

bool is_seasonal(EtsKind k) {
	return k == EtsKind::hw_additive || k == EtsKind::hw_multiplicative;
}

int smoothing_count(EtsKind k) {
	switch (k) {
	case EtsKind::ses: return 1;
	case EtsKind::holt: return 2;
	case EtsKind::damped: return 3;
	case EtsKind::hw_additive:
	case EtsKind::hw_multiplicative: return 3;
	}
	return 1;
}

struct EtsRun {
	Vector fitted;
	Vector forecast;
	double level = 0.0;
	double trend = 0.0;
	Vector season;
};

EtsRun ets_run(EtsKind kind, const Eigen::Ref<const Vector> &y, const EtsParams &p, int m, Index h) {
	const Index n = y.size();
	EtsRun r;
	r.fitted = Vector::Constant(n, kNaN);
	const bool seasonal = is_seasonal(kind);
	const bool mult = kind == EtsKind::hw_multiplicative;
	const double phi = kind == EtsKind::damped ? p.phi : 1.0;
	double level = 0.0;
	double trend = 0.0;
	Vector season;
	Index start = 1;
	if (seasonal) {
		const double first = y.head(m).mean();
		const double second = y.segment(m, m).mean();
		trend = (second - first) / m;
		season.resize(m);
		for (int i = 0; i < m; ++i) {
			const double base = first + (i - 0.5 * (m - 1)) * trend;
			season[i] = mult ? y[i] / base : y[i] - base;
		}
		level = first + 0.5 * (m - 1) * trend;
		start = m;
	} else {
		level = y[0];
		if (has_trend(kind)) {
			const Index k = std::min<Index>(n - 1, 4);
			trend = k > 0 ? (y[k] - y[0]) / static_cast<double>(k) : 0.0;
		}
	}
	for (Index t = start; t < n; ++t) {
		const double s = seasonal ? season[t % m] : (mult ? 1.0 : 0.0);
		const double base = level + phi * trend;
		const double yhat = mult ? base * s : base + s;
		r.fitted[t] = yhat;
		const double prev = level;
		if (mult) {
			level = p.alpha * y[t] / s + (1.0 - p.alpha) * base;
		} else {
			level = p.alpha * (y[t] - s) + (1.0 - p.alpha) * base;
		}
		if (has_trend(kind)) {
			trend = p.beta * (level - prev) + (1.0 - p.beta) * phi * trend;
		}
		if (seasonal) {
			season[t % m] = mult ? p.gamma * y[t] / level + (1.0 - p.gamma) * s
			                     : p.gamma * (y[t] - level) + (1.0 - p.gamma) * s;
		}
	}
	r.forecast.resize(h);
	double damp = 0.0;
	double pk = 1.0;
	for (Index k = 1; k <= h; ++k) {
		pk *= phi;
		damp += kind == EtsKind::damped ? pk : 1.0;
		const double base = level + (has_trend(kind) ? damp * trend : 0.0);
		const double s = seasonal ? season[(n - 1 + k) % m] : (mult ? 1.0 : 0.0);
		r.forecast[k - 1] = mult ? base * s : base + s;
	}
	r.level = level;
	r.trend = trend;
	r.season = season;
	return r;
}

double window_sse(const Eigen::Ref<const Vector> &y, const Vector &fitted, Index from) {
	double sse = 0.0;
	for (Index t = from; t < y.size(); ++t) {
		const double e = y[t] - fitted[t];
		sse += e * e;
	}
	return std::isfinite(sse) ? sse : std::numeric_limits<double>::infinity();
}

double aicc_proxy(double sse, Index n, int p, double scale) {
	const double floor = static_cast<double>(n) * std::pow(1e-10 * std::max(scale, 1e-300), 2);
	const double dn = static_cast<double>(n);
	return dn * std::log(std::max(sse, floor) / dn) + 2.0 * p * dn / (dn - p - 1.0);
}

// ---------------------------------------------------------------------------
// Theta(0, 2)

struct ThetaResult {
	Vector forecast;
	Vector fitted;
	double intercept = 0.0;
	double slope = 0.0;
	double alpha = 0.0;
	bool seasonal = false;
};

ThetaResult theta_core(const Eigen::Ref<const Vector> &x, Index h) {
	const Index n = x.size();
	Vector t = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
	const double tm = t.mean();
	const double xm = x.mean();
	const double stt = (t.array() - tm).square().sum();
	const double slope = ((t.array() - tm) * (x.array() - xm)).sum() / stt;
	const double intercept = xm - slope * tm;
	Vector line = (intercept + slope * t.array()).matrix();
	Vector theta2 = 2.0 * x - line;
	auto ses = ses_fit(theta2);
	ThetaResult r;
	r.intercept = intercept;
	r.slope = slope;
	r.alpha = ses.alpha;
	r.forecast.resize(h);
	for (Index k = 1; k <= h; ++k) {
		const double trend = intercept + slope * static_cast<double>(n - 1 + k);
		r.forecast[k - 1] = 0.5 * trend + 0.5 * ses.level;
	}
	r.fitted = (0.5 * line + 0.5 * ses.fitted).eval();
	return r;
}

ThetaResult theta_fit(const Eigen::Ref<const Vector> &y, Index h, int period) {
	require_length(y, 4, "theta");
	require_horizon(h);
	const Index n = y.size();
	if (period >= 2 && n >= 2 * period) {
		const SeasonalMode mode = y.minCoeff() > 0.0 ? SeasonalMode::multiplicative : SeasonalMode::additive;
		const bool mult = mode == SeasonalMode::multiplicative;
		const Vector idx = seasonal_indices(y, period, mode);
		Vector adj(n);
		for (Index t = 0; t < n; ++t) {
			adj[t] = mult ? y[t] / idx[t % period] : y[t] - idx[t % period];
		}
		auto r = theta_core(adj, h);
		for (Index t = 0; t < n; ++t) {
			r.fitted[t] = mult ? r.fitted[t] * idx[t % period] : r.fitted[t] + idx[t % period];
		}
		for (Index k = 1; k <= h; ++k) {
			const double s = idx[(n - 1 + k) % period];
			r.forecast[k - 1] = mult ? r.forecast[k - 1] * s : r.forecast[k - 1] + s;
		}
		r.seasonal = true;
		return r;
	}
	return theta_core(y, h);
}

// ---------------------------------------------------------------------------
// Classical decomposition + AR(p)

struct ArModel {
	int order = 0;
	Vector coef; // intercept, then lags 1..p
	double sse = 0.0;
};

ArModel ar_least_squares(const Vector &x, int p, Index from) {
	const Index rows = x.size() - from;
	Matrix design(rows, p + 1);
	Vector target(rows);
	for (Index i = 0; i < rows; ++i) {
		const Index t = from + i;
		design(i, 0) = 1.0;
		for (int l = 1; l <= p; ++l) {
			design(i, l) = x[t - l];
		}
		target[i] = x[t];
	}
	ArModel m;
	m.order = p;
	Matrix gram = design.transpose() * design;
	gram.diagonal().array() += 1e-9 * (gram.diagonal().array().abs().maxCoeff() + 1.0);
	m.coef = gram.ldlt().solve(design.transpose() * target);
	m.sse = (target - design * m.coef).squaredNorm();
	return m;
}

struct StlmarResult {
	Vector forecast;
	Vector fitted;
	ArModel ar;
};

StlmarResult stlmar_fit(const Eigen::Ref<const Vector> &y, Index h, int period) {
	if (period < 2) {
		throw Error(ErrorCode::NoSeasonality, "stlmar needs a seasonal period");
	}
	require_horizon(h);
	require_length(y, 3 * static_cast<Index>(period), "stlmar");
	const Index n = y.size();
	const Vector idx = seasonal_indices(y, period, SeasonalMode::additive);
	Vector adj(n);
	for (Index t = 0; t < n; ++t) {
		adj[t] = y[t] - idx[t % period];
	}
	const int max_p = std::max(1, std::min<int>(10, static_cast<int>(n / 5)));
	// Common window so every order is scored on the same observations.
	const Index from = max_p;
	ArModel best;
	double best_aicc = std::numeric_limits<double>::infinity();
	const double scale = adj.array().abs().maxCoeff();
	for (int p = 1; p <= max_p; ++p) {
		if (n - from - (p + 1) - 1 <= 0) {
			break;
		}
		auto m = ar_least_squares(adj, p, from);
		const double a = aicc_proxy(m.sse, n - from, p + 1, scale);
		if (a < best_aicc) {
			best_aicc = a;
			best = m;
		}
	}
	if (best.order == 0) {
		throw Error(ErrorCode::SeriesTooShort, "stlmar: series too short for an AR fit");
	}
	best = ar_least_squares(adj, best.order, best.order);
	const int p = best.order;
	StlmarResult r;
	r.ar = best;
	r.fitted = Vector::Constant(n, kNaN);
	for (Index t = p; t < n; ++t) {
		double v = best.coef[0];
		for (int l = 1; l <= p; ++l) {
			v += best.coef[l] * adj[t - l];
		}
		r.fitted[t] = v + idx[t % period];
	}
	std::vector<double> path(adj.data(), adj.data() + n);
	r.forecast.resize(h);
	for (Index k = 1; k <= h; ++k) {
		double v = best.coef[0];
		for (int l = 1; l <= p; ++l) {
			v += best.coef[l] * path[path.size() - static_cast<std::size_t>(l)];
		}
		path.push_back(v);
		r.forecast[k - 1] = v + idx[(n - 1 + k) % period];
	}
	return r;
}

} // namespace

std::string_view to_string(BaseModel model) {
	switch (model) {
	case BaseModel::naive: return "naive";
	case BaseModel::snaive: return "snaive";
	case BaseModel::rwdrift: return "rwdrift";
	case BaseModel::theta: return "theta";
	case BaseModel::ets: return "ets";
	case BaseModel::stlmar: return "stlmar";
	case BaseModel::meanf: return "meanf";
	}
	return "naive";
}

std::optional<BaseModel> parse_base_model(std::string_view name) {
	for (auto m : all_base_models()) {
		if (to_string(m) == name) {
			return m;
		}
	}
	return std::nullopt;
}

const std::vector<BaseModel> &all_base_models() {
	static const std::vector<BaseModel> models{BaseModel::naive, BaseModel::snaive, BaseModel::rwdrift, BaseModel::theta,
	                                           BaseModel::ets,   BaseModel::stlmar, BaseModel::meanf};
	return models;
}

std::string_view to_string(EtsKind kind) {
	switch (kind) {
	case EtsKind::ses: return "ses";
	case EtsKind::holt: return "holt";
	case EtsKind::damped: return "damped";
	case EtsKind::hw_additive: return "hw_additive";
	case EtsKind::hw_multiplicative: return "hw_multiplicative";
	}
	return "ses";
}

Vector forecast_naive(const Eigen::Ref<const Vector> &train, Index h) {
	require_length(train, 1, "naive");
	require_horizon(h);
	return Vector::Constant(h, train[train.size() - 1]);
}

Vector forecast_snaive(const Eigen::Ref<const Vector> &train, Index h, int period) {
	require_horizon(h);
	const int m = std::max(period, 1);
	if (train.size() < m) {
		throw Error(ErrorCode::PeriodTooLong, "period " + std::to_string(m) + " exceeds the training length " + std::to_string(train.size()));
	}
	require_length(train, 1, "snaive");
	const Index n = train.size();
	Vector out(h);
	for (Index k = 1; k <= h; ++k) {
		out[k - 1] = train[n - m + (k - 1) % m];
	}
	return out;
}

Vector forecast_rwdrift(const Eigen::Ref<const Vector> &train, Index h) {
	require_length(train, 2, "rwdrift");
	require_horizon(h);
	const Index n = train.size();
	const double drift = (train[n - 1] - train[0]) / static_cast<double>(n - 1);
	Vector out(h);
	for (Index k = 1; k <= h; ++k) {
		out[k - 1] = train[n - 1] + static_cast<double>(k) * drift;
	}
	return out;
}

Vector forecast_theta(const Eigen::Ref<const Vector> &train, Index h, int period) {
	return theta_fit(train, h, period).forecast;
}

Vector forecast_ets(const Eigen::Ref<const Vector> &train, Index h, int period) {
	return fit_ets(train, h, period).forecast;
}

Vector forecast_stlmar(const Eigen::Ref<const Vector> &train, Index h, int period) {
	return stlmar_fit(train, h, period).forecast;
}

Vector forecast_meanf(const Eigen::Ref<const Vector> &train, Index h) {
	require_length(train, 1, "meanf");
	require_horizon(h);
	return Vector::Constant(h, train.mean());
}

std::vector<EtsKind> ets_candidates(const Eigen::Ref<const Vector> &y, int period) {
	std::vector<EtsKind> out{EtsKind::ses, EtsKind::holt, EtsKind::damped};
	if (period >= 2 && y.size() >= 2 * static_cast<Index>(period)) {
		out.push_back(EtsKind::hw_additive);
		if (y.minCoeff() > 0.0) {
			out.push_back(EtsKind::hw_multiplicative);
		}
	}
	return out;
}

EtsFit fit_ets_candidate(EtsKind kind, const Eigen::Ref<const Vector> &y, Index h, int period, Index score_from) {
	const int m = is_seasonal(kind) ? period : 1;
	if (is_seasonal(kind) && (period < 2 || y.size() < 2 * static_cast<Index>(period))) {
		throw Error(ErrorCode::SeriesTooShort, "seasonal exponential smoothing needs two full cycles");
	}
	if (kind == EtsKind::hw_multiplicative && y.minCoeff() <= 0.0) {
		throw Error(ErrorCode::InvalidArgument, "multiplicative Holt-Winters needs strictly positive data");
	}
	const Index from = std::max<Index>(score_from, is_seasonal(kind) ? m : 1);
	EtsParams p;
	auto score = [&](const EtsParams &q) { return window_sse(y, ets_run(kind, y, q, m, 0).fitted, from); };
	double best = score(p);
	auto scan = [&](double EtsParams::*field, const std::vector<double> &values) {
		bool changed = false;
		for (double v : values) {
			EtsParams q = p;
			q.*field = v;
			const double s = score(q);
			if (improves(s, best)) {
				best = s;
				p = q;
				changed = true;
			}
		}
		return changed;
	};
	for (int sweep = 0; sweep < 6; ++sweep) {
		bool changed = scan(&EtsParams::alpha, alpha_grid());
		if (has_trend(kind)) changed |= scan(&EtsParams::beta, beta_grid());
		if (kind == EtsKind::damped) changed |= scan(&EtsParams::phi, phi_grid());
		if (is_seasonal(kind)) changed |= scan(&EtsParams::gamma, beta_grid());
		if (!changed) {
			break;
		}
	}
	auto run = ets_run(kind, y, p, m, h);
	EtsFit fit;
	fit.kind = kind;
	fit.alpha = p.alpha;
	fit.beta = has_trend(kind) ? p.beta : 0.0;
	fit.gamma = is_seasonal(kind) ? p.gamma : 0.0;
	fit.phi = kind == EtsKind::damped ? p.phi : 1.0;
	fit.period = m;
	fit.n_params = smoothing_count(kind) + (has_trend(kind) ? 2 : 1) + (is_seasonal(kind) ? m - 1 : 0);
	fit.sse = best;
	const Index n_eff = y.size() - from;
	fit.aicc = n_eff - fit.n_params - 1 > 0 ? aicc_proxy(best, n_eff, fit.n_params, y.array().abs().maxCoeff())
	                                        : std::numeric_limits<double>::infinity();
	fit.fitted = std::move(run.fitted);
	fit.forecast = std::move(run.forecast);
	return fit;
}

EtsFit fit_ets(const Eigen::Ref<const Vector> &y, Index h, int period) {
	require_length(y, 4, "ets");
	require_horizon(h);
	const auto kinds = ets_candidates(y, period);
	const bool seasonal = std::any_of(kinds.begin(), kinds.end(), is_seasonal);
	const Index from = seasonal ? period : 1;
	std::optional<EtsFit> best;
	for (auto k : kinds) {
		auto f = fit_ets_candidate(k, y, h, period, from);
		if (!f.forecast.allFinite()) {
			continue;
		}
		if (!best || f.aicc < best->aicc) {
			best = std::move(f);
		}
	}
	if (!best || !std::isfinite(best->aicc)) {
		// Too few points for any AICc; fall back to plain SES.
		return fit_ets_candidate(EtsKind::ses, y, h, period, 1);
	}
	return *best;
}

Vector ModelFit::in_sample_errors(const Eigen::Ref<const Vector> &train) const {
	const Index n = train.size() - warmup;
	Vector e(std::max<Index>(n, 0));
	for (Index i = 0; i < e.size(); ++i) {
		e[i] = train[warmup + i] - fitted[warmup + i];
	}
	return e;
}

ModelFit fit_base_model(BaseModel model, const Eigen::Ref<const Vector> &train, Index h, const SeasonalityInfo &seasonality) {
	const Index n = train.size();
	const int m = seasonality.period_or_one();
	ModelFit fit;
	fit.model = model;
	fit.variant = std::string(to_string(model));
	fit.fitted = Vector::Constant(n, kNaN);
	switch (model) {
	case BaseModel::naive:
		fit.forecast = forecast_naive(train, h);
		fit.warmup = 1;
		fit.fitted.tail(n - 1) = train.head(n - 1);
		fit.state["last"] = train[n - 1];
		break;
	case BaseModel::snaive: {
		const int period = n >= m ? m : 1;
		fit.forecast = forecast_snaive(train, h, period);
		fit.warmup = period;
		fit.fitted.tail(n - period) = train.head(n - period);
		fit.state["period"] = period;
		break;
	}
	case BaseModel::rwdrift: {
		fit.forecast = forecast_rwdrift(train, h);
		const double drift = (train[n - 1] - train[0]) / static_cast<double>(n - 1);
		fit.warmup = 1;
		fit.fitted.tail(n - 1) = (train.head(n - 1).array() + drift).matrix();
		fit.state["last"] = train[n - 1];
		fit.state["drift"] = drift;
		break;
	}
	case BaseModel::theta: {
		auto r = theta_fit(train, h, m);
		fit.forecast = r.forecast;
		fit.fitted = r.fitted;
		fit.warmup = 1;
		fit.state = {{"intercept", r.intercept}, {"slope", r.slope}, {"alpha", r.alpha}, {"seasonal", r.seasonal ? 1.0 : 0.0}};
		break;
	}
	case BaseModel::ets: {
		auto r = fit_ets(train, h, m);
		fit.forecast = r.forecast;
		fit.fitted = r.fitted;
		fit.variant = "ets_" + std::string(to_string(r.kind));
		fit.warmup = r.period >= 2 ? r.period : 1;
		fit.state = {{"alpha", r.alpha}, {"beta", r.beta}, {"gamma", r.gamma}, {"phi", r.phi}, {"period", r.period}, {"aicc", r.aicc}};
		break;
	}
	case BaseModel::stlmar: {
		auto r = stlmar_fit(train, h, seasonality.primary_period.value_or(0));
		fit.forecast = r.forecast;
		fit.fitted = r.fitted;
		fit.warmup = r.ar.order;
		fit.state["order"] = r.ar.order;
		for (Index i = 0; i < r.ar.coef.size(); ++i) {
			fit.state["coef" + std::to_string(i)] = r.ar.coef[i];
		}
		break;
	}
	case BaseModel::meanf:
		fit.forecast = forecast_meanf(train, h);
		fit.warmup = 0;
		fit.fitted.setConstant(train.mean());
		fit.state["mean"] = train.mean();
		break;
	}
	if (!fit.forecast.allFinite()) {
		throw Error(ErrorCode::InvalidArgument, std::string(to_string(model)) + " produced a non-finite forecast");
	}
	return fit;
}

Vector PoolFit::training_errors() const {
	Vector e(static_cast<Index>(reports.size()));
	for (std::size_t i = 0; i < reports.size(); ++i) {
		e[static_cast<Index>(i)] = reports[i].training_error;
	}
	return e;
}

PoolFit fit_all(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train, const EnsembleTrainSplit &split,
                const SeasonalityInfo &seasonality, Index h) {
	if (pool.empty()) {
		throw Error(ErrorCode::EmptyPool, "the base model pool is empty");
	}
	if (split.evalid_end != train.size()) {
		throw Error(ErrorCode::InvalidArgument, "ensemble split does not match the training length");
	}
	const Index l = split.etrain_size();
	const Index v = split.evalid_size();
	const Vector etrain = train.head(l);
	const Vector evalid = train.tail(v);
	PoolFit out;
	out.split = split;
	out.seasonality = seasonality;
	std::vector<Vector> ev_rows;
	std::vector<Vector> test_rows;
	for (auto model : pool) {
		const std::string name(to_string(model));
		try {
			auto on_etrain = fit_base_model(model, etrain, v, seasonality);
			auto on_train = fit_base_model(model, train, h, seasonality);
			FitReport report;
			report.model = name;
			report.in_sample_errors = on_etrain.in_sample_errors(etrain);
			auto err = try_smape(evalid, on_etrain.forecast);
			if (err) {
				report.training_error = *err;
			} else {
				report.training_error = (evalid - on_etrain.forecast).cwiseAbs().sum() == 0.0 ? 0.0 : kUndefinedErrorPenalty;
			}
			out.evalid.model_ids.push_back(name);
			ev_rows.push_back(on_etrain.forecast);
			test_rows.push_back(on_train.forecast);
			out.reports.push_back(std::move(report));
			out.etrain_fits.push_back(std::move(on_etrain));
			out.train_fits.push_back(std::move(on_train));
		} catch (const std::exception &e) {
			warn("dropping base model " + name + ": " + e.what());
			out.dropped.push_back(name);
		}
	}
	if (out.evalid.model_ids.empty()) {
		throw Error(ErrorCode::EmptyPool, "every base model failed on this series");
	}
	out.test.model_ids = out.evalid.model_ids;
	out.evalid.horizon_start = l;
	out.test.horizon_start = train.size();
	out.evalid.values.resize(static_cast<Index>(ev_rows.size()), v);
	out.test.values.resize(static_cast<Index>(test_rows.size()), h);
	for (std::size_t i = 0; i < ev_rows.size(); ++i) {
		out.evalid.values.row(static_cast<Index>(i)) = ev_rows[i].transpose();
		out.test.values.row(static_cast<Index>(i)) = test_rows[i].transpose();
	}
	return out;
}

namespace {

nlohmann::json vec_json(const Vector &v) {
	auto arr = nlohmann::json::array();
	for (Index i = 0; i < v.size(); ++i) {
		if (std::isfinite(v[i])) {
			arr.push_back(v[i]);
		} else {
			arr.push_back(nullptr);
		}
	}
	return arr;
}

Vector json_vec(const nlohmann::json &j) {
	Vector v(static_cast<Index>(j.size()));
	for (std::size_t i = 0; i < j.size(); ++i) {
		v[static_cast<Index>(i)] = j[i].is_null() ? kNaN : j[i].get<double>();
	}
	return v;
}

nlohmann::json fit_json(const ModelFit &f) {
	nlohmann::json j;
	j["model"] = std::string(to_string(f.model));
	j["variant"] = f.variant;
	j["warmup"] = f.warmup;
	j["forecast"] = vec_json(f.forecast);
	j["fitted"] = vec_json(f.fitted);
	j["state"] = f.state;
	return j;
}

ModelFit json_fit(const nlohmann::json &j) {
	ModelFit f;
	auto m = parse_base_model(j.at("model").get<std::string>());
	if (!m) {
		throw Error(ErrorCode::SchemaError, "unknown base model in pool state");
	}
	f.model = *m;
	f.variant = j.at("variant").get<std::string>();
	f.warmup = j.at("warmup").get<Index>();
	f.forecast = json_vec(j.at("forecast"));
	f.fitted = json_vec(j.at("fitted"));
	f.state = j.at("state").get<std::map<std::string, double>>();
	return f;
}

} // namespace

std::string serialize_pool(const PoolFit &pool) {
	nlohmann::json j;
	j["format"] = "tsensemble-pool";
	j["version"] = 1;
	j["etrain_end"] = pool.split.etrain_end;
	j["evalid_end"] = pool.split.evalid_end;
	j["primary_period"] = pool.seasonality.primary_period ? nlohmann::json(*pool.seasonality.primary_period) : nlohmann::json(nullptr);
	j["secondary_period"] = pool.seasonality.secondary_period ? nlohmann::json(*pool.seasonality.secondary_period) : nlohmann::json(nullptr);
	j["primary_mode"] = std::string(to_string(pool.seasonality.primary_mode));
	j["secondary_mode"] = std::string(to_string(pool.seasonality.secondary_mode));
	j["dropped"] = pool.dropped;
	auto members = nlohmann::json::array();
	for (std::size_t i = 0; i < pool.reports.size(); ++i) {
		nlohmann::json m;
		m["name"] = pool.reports[i].model;
		m["training_error"] = pool.reports[i].training_error;
		m["in_sample_errors"] = vec_json(pool.reports[i].in_sample_errors);
		m["etrain_fit"] = fit_json(pool.etrain_fits[i]);
		m["train_fit"] = fit_json(pool.train_fits[i]);
		members.push_back(std::move(m));
	}
	j["members"] = std::move(members);
	return j.dump(1);
}

PoolFit deserialize_pool(std::string_view text) {
	nlohmann::json j;
	try {
		j = nlohmann::json::parse(text);
	} catch (const std::exception &e) {
		throw Error(ErrorCode::SchemaError, std::string("pool state is not valid JSON: ") + e.what());
	}
	if (j.value("format", "") != "tsensemble-pool" || j.value("version", 0) != 1) {
		throw Error(ErrorCode::SchemaError, "not a version 1 pool state file");
	}
	PoolFit pool;
	pool.split.etrain_end = j.at("etrain_end").get<Index>();
	pool.split.evalid_end = j.at("evalid_end").get<Index>();
	if (!j.at("primary_period").is_null()) pool.seasonality.primary_period = j["primary_period"].get<int>();
	if (!j.at("secondary_period").is_null()) pool.seasonality.secondary_period = j["secondary_period"].get<int>();
	auto mode = [](const std::string &s) { return s == "multiplicative" ? SeasonalMode::multiplicative : SeasonalMode::additive; };
	pool.seasonality.primary_mode = mode(j.at("primary_mode").get<std::string>());
	pool.seasonality.secondary_mode = mode(j.at("secondary_mode").get<std::string>());
	pool.dropped = j.at("dropped").get<std::vector<std::string>>();
	const auto &members = j.at("members");
	const auto count = static_cast<Index>(members.size());
	for (const auto &m : members) {
		FitReport r;
		r.model = m.at("name").get<std::string>();
		r.training_error = m.at("training_error").get<double>();
		r.in_sample_errors = json_vec(m.at("in_sample_errors"));
		pool.reports.push_back(std::move(r));
		pool.etrain_fits.push_back(json_fit(m.at("etrain_fit")));
		pool.train_fits.push_back(json_fit(m.at("train_fit")));
		pool.evalid.model_ids.push_back(pool.reports.back().model);
	}
	pool.test.model_ids = pool.evalid.model_ids;
	pool.evalid.horizon_start = pool.split.etrain_end;
	pool.test.horizon_start = pool.split.evalid_end;
	if (count > 0) {
		pool.evalid.values.resize(count, pool.etrain_fits.front().forecast.size());
		pool.test.values.resize(count, pool.train_fits.front().forecast.size());
		for (Index i = 0; i < count; ++i) {
			pool.evalid.values.row(i) = pool.etrain_fits[static_cast<std::size_t>(i)].forecast.transpose();
			pool.test.values.row(i) = pool.train_fits[static_cast<std::size_t>(i)].forecast.transpose();
		}
	}
	return pool;
}

} // namespace tsens
