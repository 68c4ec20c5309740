#pragma once

// Randomised workloads shared by the unit tests and the acceptance binary.
// Each returns counts so callers can both assert and report.

#include "oracles.hpp"
#include "tsensemble/ensembles.hpp"
#include "tsensemble/harness.hpp"
#include "tsensemble/preprocess.hpp"

#include <cstring>
#include <string>

namespace scenario {

using namespace tsens;

inline ForecastMatrix random_matrix(Index models, Index horizon, Rng &rng, Index start = 0) {
	ForecastMatrix f;
	f.values.resize(models, horizon);
	for (Index m = 0; m < models; ++m) {
		f.model_ids.push_back("m" + std::to_string(m));
		const double level = 50.0 + 20.0 * rng.normal();
		for (Index k = 0; k < horizon; ++k) f.values(m, k) = level + 5.0 * rng.normal();
	}
	f.horizon_start = start;
	return f;
}

inline bool in_envelope(const Vector &forecast, const ForecastMatrix &test) {
	for (Index k = 0; k < test.horizon(); ++k) {
		const double lo = test.values.col(k).minCoeff(), hi = test.values.col(k).maxCoeff();
		const double tol = 1e-9 * (1.0 + std::max(std::fabs(lo), std::fabs(hi)));
		if (!(forecast[k] >= lo - tol && forecast[k] <= hi + tol)) return false;
	}
	return true;
}

struct Tally {
	int instances = 0;
	int failures = 0;
	std::string first_failure;

	void check(bool ok, const std::string &what) {
		if (!ok && failures++ == 0) first_failure = what;
	}
	bool passed() const { return instances > 0 && failures == 0; }
};

/// Every weight-producing ensemble on random instances: weights valid and
/// weighted forecasts inside the base envelope.
inline Tally weight_invariants(int instances, std::uint64_t seed) {
	Rng rng(seed);
	Tally t;

	// A small FFORMA model, applied to random feature rows below.
	const Index corpus = 60, pool = 4, feats = 3;
	Matrix fx(corpus, feats), fe(corpus, pool);
	for (Index i = 0; i < corpus; ++i) {
		for (Index j = 0; j < feats; ++j) fx(i, j) = rng.normal();
		for (Index m = 0; m < pool; ++m) fe(i, m) = std::fabs(rng.normal()) + (m == (fx(i, 0) > 0 ? 0 : 1) ? 0.0 : 1.0);
	}
	std::vector<std::string> fids{"m0", "m1", "m2", "m3"};
	const auto fforma = fforma_train(fx, fe, fids, {"f0", "f1", "f2"}, GbtParams{40, 0.1, 3, 1.0, 5});

	const std::vector<BaseModel> recent_pool{BaseModel::naive, BaseModel::rwdrift, BaseModel::meanf, BaseModel::snaive,
	                                         BaseModel::theta};
	for (int i = 0; i < instances; ++i) {
		const Index m = 1 + rng.uniform_index(6), h = 1 + rng.uniform_index(12), v = 2 + rng.uniform_index(20);
		const ForecastMatrix test = random_matrix(m, h, rng, 100);
		const ForecastMatrix evalid = random_matrix(m, v, rng, 100 - v);
		Vector actual(v);
		for (Index k = 0; k < v; ++k) actual[k] = 50.0 + 10.0 * rng.normal();
		Vector errors(m);
		for (Index r = 0; r < m; ++r) errors[r] = rng.uniform() < 0.1 ? 0.0 : 30.0 * rng.uniform();
		const std::string tag = "instance " + std::to_string(i);

		for (auto f : {DetweFormula::inv, DetweFormula::sqr, DetweFormula::exp}) {
			const auto r = combine_detwe(errors, f, test);
			t.check(r.weights.valid() && in_envelope(r.forecast, test), tag + " combine_detwe " + std::string(to_string(f)));
		}
		for (bool sort : {false, true}) {
			const auto fs_ = ensemble_model_selection(evalid.values, actual, sort, kForwardMaxIter, smape_score(), evalid.model_ids);
			t.check(fs_.weights.valid() && in_envelope(apply_weights(fs_.weights, test), test), tag + " model_selection");
		}
		const int period = 2 + static_cast<int>(rng.uniform_index(6));
		const auto bags = ensemble_selection_bags(evalid, actual, test, period, i % 2 ? mse_score() : mae_score());
		bool bags_ok = in_envelope(bags.forecast, test);
		for (const auto &w : bags.bag_weights) bags_ok = bags_ok && w.valid();
		t.check(bags_ok, tag + " selection_bags");

		t.check(in_envelope(mean_average(test), test), tag + " mean_average");

		// Recent ensemble needs real fits: the pool is refit on a random walk.
		const Index n = 60 + rng.uniform_index(40);
		Vector y(n);
		y[0] = 20.0;
		for (Index k = 1; k < n; ++k) y[k] = y[k - 1] + rng.normal();
		SeasonalityInfo info;
		info.primary_period = 4;
		ForecastMatrix rtest = random_matrix(static_cast<Index>(recent_pool.size()), h, rng, n);
		for (std::size_t r = 0; r < recent_pool.size(); ++r) rtest.model_ids[r] = std::string(to_string(recent_pool[r]));
		const RecentConfig cfg{rng.uniform() < 0.5 ? 20 : 50, std::array{20, 30, 50}[static_cast<std::size_t>(rng.uniform_index(3))]};
		const auto rec = recent_ensemble(recent_pool, y, info, cfg, rtest);
		t.check(rec.result.weights.valid() && in_envelope(rec.result.forecast, rtest), tag + " recent_ensemble");

		Eigen::RowVectorXd row(feats);
		for (Index j = 0; j < feats; ++j) row[j] = 2.0 * rng.normal();
		const ForecastMatrix ftest = random_matrix(pool, h, rng);
		const auto ff = fforma_apply(fforma, row, ftest);
		t.check(ff.weights.valid() && in_envelope(ff.forecast, ftest), tag + " fforma");
		++t.instances;
	}
	return t;
}

/// Forward selection against exhaustive enumeration of addition multisets.
inline Tally forward_selection_oracle(int instances, std::uint64_t seed) {
	Rng rng(seed);
	Tally t;
	for (int i = 0; i < instances; ++i) {
		const Index m = 1 + rng.uniform_index(3), v = 2 + rng.uniform_index(10);
		const int max_iter = 1 + static_cast<int>(rng.uniform_index(5));
		const bool sort = rng.uniform() < 0.5;
		Matrix ev(m, v);
		Vector actual(v);
		for (Index k = 0; k < v; ++k) actual[k] = 10.0 + 5.0 * rng.uniform();
		for (Index r = 0; r < m; ++r)
			for (Index k = 0; k < v; ++k) ev(r, k) = actual[k] + 4.0 * rng.normal() + (r - 1.0);
		std::vector<int> candidates;
		for (Index r = 0; r < m; ++r) candidates.push_back(static_cast<int>(r));
		if (sort) {
			std::vector<double> single(static_cast<std::size_t>(m));
			for (Index r = 0; r < m; ++r) single[static_cast<std::size_t>(r)] = oracle::smape(actual, ev.row(r).transpose());
			std::stable_sort(candidates.begin(), candidates.end(),
			                 [&](int a, int b) { return single[static_cast<std::size_t>(a)] < single[static_cast<std::size_t>(b)]; });
			candidates.resize(static_cast<std::size_t>((m + 1) / 2));
			std::sort(candidates.begin(), candidates.end());
		}
		const auto want = oracle::forward_selection(ev, actual, max_iter, candidates);
		const auto got = ensemble_model_selection(ev, actual, sort, max_iter);
		const double got_err = oracle::smape(actual, (got.weights.weights.transpose() * ev).transpose());
		t.check(got.counts == want.counts && std::fabs(got_err - want.error) <= 1e-12,
		        "instance " + std::to_string(i));
		++t.instances;
	}
	return t;
}

inline Tally backward_monotone(int instances, std::uint64_t seed) {
	Rng rng(seed);
	Tally t;
	for (int i = 0; i < instances; ++i) {
		const Index m = 2 + rng.uniform_index(8), v = 2 + rng.uniform_index(15);
		Matrix ev(m, v);
		Vector actual(v), member(m);
		for (Index k = 0; k < v; ++k) actual[k] = 20.0 + 5.0 * rng.normal();
		for (Index r = 0; r < m; ++r) {
			const double bias = 8.0 * rng.normal(), noise = 6.0 * rng.uniform();
			for (Index k = 0; k < v; ++k) ev(r, k) = actual[k] + bias + noise * rng.normal();
			member[r] = oracle::smape(actual, ev.row(r).transpose());
		}
		const auto be = backward_eliminate(ev, actual, member);
		const double initial = oracle::smape(actual, ev.colwise().mean().transpose());
		bool ok = std::fabs(be.trace.front() - initial) <= 1e-12;
		for (std::size_t k = 1; k < be.trace.size(); ++k) ok = ok && be.trace[k] <= be.trace[k - 1];
		Vector fin = Vector::Zero(v);
		for (Index r : be.survivors) fin += ev.row(r).transpose();
		fin /= static_cast<double>(be.survivors.size());
		ok = ok && !be.survivors.empty() && oracle::smape(actual, fin) <= initial + 1e-12;
		t.check(ok, "instance " + std::to_string(i));
		++t.instances;
	}
	return t;
}

/// Perturbing the actuals of fold j leaves earlier folds' OOF rows untouched.
inline Tally stacking_leakage(int series, std::uint64_t seed) {
	// Short first folds make stlmar drop out; that is expected here.
	set_warning_sink([](std::string_view) {});
	struct Restore {
		~Restore() { set_warning_sink(nullptr); }
	} restore;
	Rng rng(seed);
	Tally t;
	for (int s = 0; s < series; ++s) {
		const Index n = 60 + rng.uniform_index(60);
		Vector y(n);
		for (Index k = 0; k < n; ++k) y[k] = 30.0 + 0.1 * k + 3.0 * std::sin(k * 2.0 * M_PI / 4.0) + rng.normal();
		SeasonalityInfo info;
		info.primary_period = 4;
		const auto base = stacking_oof(all_base_models(), y, info);
		const auto folds = time_series_folds(n, kDefaultFolds);
		for (std::size_t j = 0; j < folds.size(); ++j) {
			Vector z = y;
			const auto [start, size] = folds[j];
			for (Index k = start; k < start + size; ++k) z[k] += 10.0 * rng.normal();
			const auto pert = stacking_oof(all_base_models(), z, info);
			bool same = pert.model_ids == base.model_ids;
			for (std::size_t r = 0; same && r < base.fold.size(); ++r) {
				if (base.fold[r] < static_cast<int>(j)) {
					for (Index c = 0; c < base.values.cols(); ++c) {
						same = same && std::memcmp(&base.values(static_cast<Index>(r), c), &pert.values(static_cast<Index>(r), c), sizeof(double)) == 0;
					}
				}
			}
			t.check(same, "series " + std::to_string(s) + " fold " + std::to_string(j));
		}
		++t.instances;
	}
	return t;
}

/// Sample sd of y_noisy - y_etrain relative to the declared alpha * sqrt(delta_y).
inline double noise_sd_ratio(int draws, std::uint64_t seed) {
	Rng rng(seed);
	const Vector y_etrain = Vector::LinSpaced(100, 1.0, 100.0);
	Vector y_evalid(5), yhat(5);
	y_evalid << 10, 12, 9, 11, 10;
	yhat << 12, 11, 13, 8, 10;
	double sum = 0.0, sq = 0.0;
	int count = 0;
	double delta = 0.0;
	while (count < draws) {
		const auto a = augment_targets(y_etrain, y_evalid, yhat, true, rng);
		delta = a.delta_y;
		for (Index i = 0; i < a.l && count < draws; ++i, ++count) {
			const double d = a.y_noisy[i] - y_etrain[i];
			sum += d;
			sq += d * d;
		}
	}
	const double mean = sum / count;
	const double sd = std::sqrt(sq / count - mean * mean);
	return sd / (kNoiseAlpha * std::sqrt(delta));
}

struct BoosterDuel {
	double naive = 0.0;
	double boosted = 0.0;
};

/// superbooster(naive) vs naive on a daily series driven by the weekday.
inline BoosterDuel weekday_superbooster(std::uint64_t seed, Index length = 500, Index h = 28) {
	const TimeSeries full = synthetic_weekday_series(length, seed);
	const auto tt = split(full, h);
	const Vector y = tt.train.target();
	const auto info = detect_seasonality(y);
	const auto es = ensemble_split(y.size(), kDefaultValidFraction, info.primary_period);
	const PoolFit pool = fit_all({BaseModel::naive}, y, es, info, h);
	const ExogenousFrame frame = build_exogenous_frame(full, info, nullptr);
	SuperboosterInput in;
	in.base = 0;
	in.pool = &pool;
	in.train = &y;
	in.exogenous = &frame;
	in.meta = MetaModelKind::gbt;
	in.seed = seed;
	const auto sb = superbooster(in);
	const Vector actual = tt.test.target();
	return {smape_custom(actual, pool.test.values.row(0).transpose()), smape_custom(actual, sb.forecast)};
}

/// Corpus where model 0 never errs: mean learned weight on it.
inline double fforma_zero_error_mass(std::uint64_t seed) {
	Rng rng(seed);
	const Index corpus = 80, pool = 4, feats = 5;
	Matrix x(corpus, feats), e(corpus, pool);
	for (Index i = 0; i < corpus; ++i) {
		for (Index j = 0; j < feats; ++j) x(i, j) = rng.normal();
		e(i, 0) = 0.0;
		for (Index m = 1; m < pool; ++m) e(i, m) = 5.0 + 20.0 * rng.uniform();
	}
	const auto model = fforma_train(x, e, {"a", "b", "c", "d"}, {"f0", "f1", "f2", "f3", "f4"});
	double mass = 0.0;
	for (Index i = 0; i < corpus; ++i) mass += model.weights(x.row(i))[0];
	return mass / corpus;
}

/// Largest relative deviation between the analytic softmax-objective
/// gradient and central differences over random probes.
inline double fforma_gradient_deviation(int probes, std::uint64_t seed) {
	Rng rng(seed);
	double worst = 0.0;
	const double step = 1e-6;
	for (int p = 0; p < probes; ++p) {
		const Index m = 2 + rng.uniform_index(6);
		Matrix e(1, m), s(1, m);
		for (Index j = 0; j < m; ++j) {
			e(0, j) = 10.0 * rng.uniform();
			s(0, j) = 2.0 * rng.normal();
		}
		SoftmaxWeightedError obj(e);
		Matrix g, h;
		obj.gradient(s, g, h);
		for (Index j = 0; j < m; ++j) {
			Eigen::RowVectorXd up = s.row(0), dn = s.row(0);
			up[j] += step;
			dn[j] -= step;
			const double fd = (obj.row_loss(up, 0) - obj.row_loss(dn, 0)) / (2 * step);
			worst = std::max(worst, std::fabs(g(0, j) - fd) / std::max(1.0, std::fabs(fd)));
		}
	}
	return worst;
}

} // namespace scenario
