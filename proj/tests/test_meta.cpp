#include "catch_amalgamated.hpp"

#include "tsensemble/meta_features.hpp"
#include "tsensemble/meta_learner.hpp"
#include "tsensemble/synthetic.hpp"

#include <sstream>

using namespace tsens;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SeasonalityInfo no_season() { return {}; }

SeasonalityInfo season(int m) {
	SeasonalityInfo s;
	s.primary_period = m;
	return s;
}

MetaFeatureVector fv(std::vector<double> v) {
	MetaFeatureVector f;
	for (std::size_t i = 0; i < v.size(); ++i) f.names.push_back("f" + std::to_string(i));
	f.values = Eigen::Map<Eigen::RowVectorXd>(v.data(), static_cast<Index>(v.size()));
	return f;
}

std::vector<std::string> grid(int n) {
	std::vector<std::string> g;
	for (int i = 0; i < n; ++i) g.push_back("s" + std::to_string(i));
	return g;
}

// One dataset whose specs carry the given ranks.
SpecRanks one_dataset(const std::vector<double> &ranks) {
	SpecRanks r;
	for (std::size_t i = 0; i < ranks.size(); ++i) r["d"]["s" + std::to_string(i)] = ranks[i];
	return r;
}

} // namespace

TEST_CASE("series features on reference shapes", "[meta]") {
	const Vector line = Vector::LinSpaced(60, 1.0, 60.0);
	CHECK(extract_series_features(line, no_season())["trend_strength"] >= 0.99);

	Rng rng(5);
	Vector noise(1000);
	for (auto &v : noise) v = rng.normal();
	const auto white = extract_series_features(noise, no_season());
	CHECK(white["spectral_entropy"] >= 0.95);
	CHECK(spectral_entropy(noise) >= 0.95);

	const Vector sine = synthetic_sine(1000, 12, 5.0, 0.0, 0.0, rng);
	CHECK(spectral_entropy(sine) < 0.5);

	const auto flat = extract_series_features(Vector::Constant(40, 3.0), no_season());
	CHECK(flat["stability"] == 0.0);
	CHECK(flat["lumpiness"] == 0.0);
	CHECK(flat["cv"] == 0.0);
	CHECK(flat["variance_defined"] == 0.0);

	CHECK_THROWS_MATCHES(extract_series_features(Vector::Ones(7), no_season()), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::SeriesTooShort; }));
}

TEST_CASE("autocorrelation building blocks", "[meta]") {
	Rng rng(8);
	const Vector ar = synthetic_ar1(5000, 0.7, 0.0, 1.0, rng);
	const Vector acf = autocorrelations(ar, 3);
	CHECK_THAT(acf[0], WithinAbs(0.7, 0.05));
	CHECK_THAT(acf[1], WithinAbs(0.49, 0.05));
	const Vector pacf = partial_autocorrelations(ar, 3);
	CHECK_THAT(pacf[0], WithinAbs(acf[0], 1e-12));
	CHECK_THAT(pacf[1], WithinAbs(0.0, 0.05));
	CHECK(autocorrelations(Vector::Constant(10, 2.0), 2).isZero());
}

TEST_CASE("general features count exogenous columns", "[meta]") {
	const Vector y = Vector::LinSpaced(100, 1.0, 100.0);
	std::vector<ExoColumn> exo{{"price", ColumnKind::numeric, Vector::Ones(100), {}},
	                           {"promo", ColumnKind::boolean, Vector::Zero(100), {}}};
	const auto g = extract_general_features(TimeSeries("s", y, std::nullopt, exo));
	CHECK(g["nr_num"] == 1.0);
	CHECK(g["nr_bin"] == 1.0);
	CHECK(g["nr_cat"] == 0.0);
	CHECK(g["nr_attr"] == 2.0);
	CHECK(g["num_to_cat"] == 1.0);

	const auto none = extract_general_features(TimeSeries("s", y));
	for (const char *n : {"nr_cat", "nr_bin", "nr_num", "nr_attr", "num_to_cat"}) CHECK(none[n] == 0.0);
	CHECK(none["inst_to_attr"] == 100.0);

	std::vector<ExoColumn> four;
	for (int i = 0; i < 4; ++i) four.push_back({"x" + std::to_string(i), ColumnKind::numeric, Vector::Zero(100), {}});
	CHECK(extract_general_features(TimeSeries("s", y, std::nullopt, four))["inst_to_attr"] == 25.0);
	CHECK(general_feature_names().size() == 6);
}

TEST_CASE("features are finite, bounded, deterministic and scale free", "[meta][property]") {
	Rng rng(17);
	for (int rep = 0; rep < 40; ++rep) {
		const Index n = 24 + rng.uniform_index(200);
		const int m = 4 + static_cast<int>(rng.uniform_index(9));
		Vector y = synthetic_sine(n, m, 3.0 * rng.uniform(), 20.0 + 10.0 * rng.normal(), 0.2 + rng.uniform(), rng);
		y += Vector::LinSpaced(n, 0.0, 5.0 * rng.normal());
		const SeasonalityInfo info = rep % 3 == 0 ? no_season() : season(m);
		const auto f = extract_series_features(y, info);
		REQUIRE(f.names == series_feature_names());
		CHECK(f.values.allFinite());
		for (const char *bounded : {"trend_strength", "seasonal_strength", "spectral_entropy"}) {
			CHECK((f[bounded] >= 0.0 && f[bounded] <= 1.0));
		}

		const Vector copy = y;
		CHECK(extract_series_features(copy, info).values == f.values);

		const double c = std::exp(4.0 * rng.normal());
		const auto scaled = extract_series_features(Vector(c * y), info);
		for (std::size_t i = 0; i < f.names.size(); ++i) {
			INFO(f.names[i] << " scale " << c);
			const auto j = static_cast<Index>(i);
			CHECK_THAT(scaled.values[j], WithinAbs(f.values[j], 1e-7 * (1.0 + std::fabs(f.values[j]))));
		}
	}
}

TEST_CASE("feature CSV round-trip", "[meta]") {
	Rng rng(3);
	std::map<std::string, MetaFeatureVector> rows;
	for (int i = 0; i < 3; ++i) {
		const TimeSeries s("ds" + std::to_string(i), synthetic_sine(60, 6, 2.0, 10.0, 0.5, rng));
		rows[s.id()] = extract_features(s, season(6));
	}
	std::stringstream ss;
	write_feature_csv(ss, rows);
	CHECK(ss.str().rfind("# feature_set=" + std::string(kFeatureSetVersion), 0) == 0);
	const auto back = read_feature_csv(ss);
	REQUIRE(back.size() == 3);
	for (const auto &[id, f] : rows) {
		CHECK(back.at(id).names == all_feature_names());
		CHECK(back.at(id).values == f.values);
	}
}

TEST_CASE("labels follow the rank rule", "[meta]") {
	const auto specs = grid(12);
	std::vector<double> r(12);
	std::iota(r.begin(), r.end(), 1.0);
	const auto ranks = one_dataset(r);
	const std::map<std::string, MetaFeatureVector> feats{{"d", fv({1.0})}};
	const auto meta = build_meta_dataset(ranks, feats, specs, 5);
	CHECK(meta.labels(0, 2) == 1);  // rank 3
	CHECK(meta.labels(0, 9) == 0);  // rank 10
	CHECK(meta.labels.sum() == 5);
	CHECK(build_meta_dataset(ranks, feats, specs, 12).labels.sum() == 12);
	CHECK(build_meta_dataset(ranks, feats, specs, 40).labels.sum() == 12);

	std::vector<ResultRecord> partial{{"d", "s0", 1.0}};
	CHECK_THROWS_MATCHES(spec_ranks(partial, {"s0", "s1"}), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::IncompleteGrid; }));
}

TEST_CASE("positive label count matches K up to ties", "[meta][property]") {
	Rng rng(9);
	for (int rep = 0; rep < 200; ++rep) {
		const int g = 2 + static_cast<int>(rng.uniform_index(30));
		const auto specs = grid(g);
		const bool ties = rep % 2 == 1;
		std::vector<ResultRecord> recs;
		for (const auto &s : specs) {
			ResultRecord rec{"d", s, ties ? std::floor(3.0 * rng.uniform()) : rng.uniform()};
			if (rng.uniform() < 0.1) rec.status = RecordStatus::failed;
			recs.push_back(rec);
		}
		const auto ranks = spec_ranks(recs, specs);
		const int k = 1 + static_cast<int>(rng.uniform_index(g));
		const auto meta = build_meta_dataset(ranks, {{"d", fv({0.0})}}, specs, k);
		const int positives = meta.labels.sum();
		// Brute force: count specs with fewer than k strictly better errors.
		int expected = 0;
		for (const auto &a : recs) {
			const double ea = a.status == RecordStatus::ok ? a.smape : INFINITY;
			int better = 0;
			for (const auto &b : recs) {
				const double eb = b.status == RecordStatus::ok ? b.smape : INFINITY;
				better += eb < ea ? 1 : 0;
			}
			expected += better < k ? 1 : 0;
		}
		CHECK(positives == expected);
		CHECK(positives >= std::min(k, g));
		bool tie_free = true;
		for (const auto &a : recs)
			for (const auto &b : recs)
				if (&a != &b && a.status == b.status && (a.status != RecordStatus::ok || a.smape == b.smape)) tie_free = false;
		if (tie_free) CHECK(positives == k);
	}
}

TEST_CASE("random oversampling", "[meta]") {
	Rng rng(1);
	Eigen::VectorXi y = Eigen::VectorXi::Zero(100);
	y.head(10).setOnes();
	const auto rows = oversample_balance(y, rng);
	int pos = 0;
	for (Index i : rows) pos += y[i];
	CHECK(pos == 90);
	CHECK(rows.size() == 180);

	Eigen::VectorXi even = Eigen::VectorXi::Zero(100);
	even.head(50).setOnes();
	CHECK(oversample_balance(even, rng).size() == 100);

	std::vector<std::string> warnings;
	set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
	const auto same = oversample_balance(Eigen::VectorXi::Zero(30), rng);
	set_warning_sink(nullptr);
	CHECK(same.size() == 30);
	CHECK(warnings.size() == 1);
}

TEST_CASE("selectors learn a threshold rule", "[meta]") {
	Rng rng(4);
	const auto specs = grid(3);
	SpecRanks ranks;
	std::map<std::string, MetaFeatureVector> feats;
	auto make = [&](const std::string &id) {
		const double x = rng.uniform(), noise = rng.uniform();
		feats[id] = fv({x, noise});
		// s0 is top-1 exactly when x > 0.6; s2 is never in the top 1.
		ranks[id] = x > 0.6 ? std::map<std::string, double>{{"s0", 1}, {"s1", 2}, {"s2", 3}}
		                    : std::map<std::string, double>{{"s0", 2}, {"s1", 1}, {"s2", 3}};
	};
	for (int i = 0; i < 200; ++i) make("train" + std::to_string(i));
	const auto meta = build_meta_dataset(ranks, feats, specs, 1);
	SelectorParams params;
	params.forest.n_trees = 30;
	const auto model = train_selectors(meta, ranks, 11, params);
	CHECK(model.classifiers.size() == specs.size());
	CHECK_FALSE(model.classifiers[2].has_value());
	CHECK(model.constant[2] == 0);

	int right = 0;
	for (int i = 0; i < 200; ++i) {
		const double x = rng.uniform();
		const auto chosen = select_specs(model, fv({x, rng.uniform()}));
		CHECK(std::find(chosen.begin(), chosen.end(), "s2") == chosen.end());
		const bool picked = std::find(chosen.begin(), chosen.end(), "s0") != chosen.end();
		right += picked == (x > 0.6) ? 1 : 0;
	}
	CHECK(right >= 190);

	const auto again = train_selectors(meta, ranks, 11, params);
	CHECK(to_json(again) == to_json(model));
	const auto back = selector_from_json(to_json(model));
	CHECK(to_json(back) == to_json(model));
	CHECK(model.feature_usage()[0] > 0);

	CHECK_THROWS_MATCHES(select_specs(model, fv({0.5})), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::FeatureVersionMismatch; }));
	auto stale = to_json(model);
	stale["feature_set"] = "tsf-0";
	CHECK_THROWS_AS(selector_from_json(stale), Error);
	CHECK_THROWS_AS(train_selectors(meta, ranks, 11, SelectorParams{params.forest, 500}), Error);
}

TEST_CASE("selection votes and the empty fallback", "[meta]") {
	SelectorModel model;
	model.feature_names = {"f0"};
	model.spec_ids = {"a", "b", "c"};
	model.classifiers.resize(3);
	model.corpus_mean_rank = {2.0, 1.5, 3.0};

	model.constant = {0, 0, 0};
	set_warning_sink([](std::string_view) {});
	CHECK(select_specs(model, fv({0.0})) == std::vector<std::string>{"b"});
	set_warning_sink(nullptr);

	model.constant = {1, 0, 1};
	CHECK(select_specs(model, fv({0.0})) == std::vector<std::string>{"a", "c"});
}

TEST_CASE("selection evaluation", "[meta]") {
	SpecRanks ranks{{"d1", {{"a", 4}, {"b", 9}, {"c", 1}}}, {"d2", {{"a", 2}, {"b", 1}, {"c", 3}}}};
	CHECK(evaluate_selection(ranks, {{"d1", {"a", "b"}}}).r == 4.0);
	const auto p = evaluate_selection(ranks, {{"d1", {"a", "b"}}, {"d2", {"a", "b", "c"}}});
	CHECK(p.n == 2.5);
	CHECK(p.r == 2.5);
	CHECK(evaluate_selection(ranks, {{"d1", {"a", "b", "c"}}, {"d2", {"c", "b", "a"}}}).r == 1.0);
	const auto q = evaluate_selection(ranks, {{"d1", {"a", "b"}}, {"d2", {"a", "b", "c", "a"}}});
	CHECK(q.n == 3.0);
}

TEST_CASE("baselines", "[meta]") {
	const auto specs = grid(6);
	const std::vector<double> mean{3.0, 1.0, 5.0, 1.0, 2.0, 6.0};
	CHECK(baseline_autorank(specs, mean, 1) == std::vector<std::string>{"s1"});
	CHECK(baseline_autorank(specs, mean, 3) == std::vector<std::string>{"s1", "s3", "s4"});
	CHECK(baseline_autorank(specs, mean, 6).size() == 6);
	CHECK_THROWS_AS(baseline_autorank(specs, mean, 0), Error);

	Rng a(7), b(7);
	CHECK(baseline_random(specs, 3, a) == baseline_random(specs, 3, b));
	auto all = baseline_random(specs, 6, a);
	std::sort(all.begin(), all.end());
	CHECK(all == specs);

	// Full selections always reach rank 1.
	SpecRanks ranks;
	Rng rng(2);
	for (int d = 0; d < 20; ++d) {
		std::vector<double> e(6);
		for (auto &v : e) v = rng.uniform();
		const auto r = min_ranks(e);
		for (int s = 0; s < 6; ++s) ranks["d" + std::to_string(d)][specs[static_cast<std::size_t>(s)]] = r[static_cast<std::size_t>(s)];
	}
	std::map<std::string, std::vector<std::string>> full;
	for (const auto &[id, _] : ranks) full[id] = baseline_autorank(specs, corpus_mean_ranks(ranks, specs), 6);
	CHECK(evaluate_selection(ranks, full).r == 1.0);
}

TEST_CASE("random selection improves as it grows", "[meta][property]") {
	const auto specs = grid(20);
	SpecRanks ranks;
	Rng rng(13);
	for (int d = 0; d < 50; ++d) {
		std::vector<double> e(20);
		for (auto &v : e) v = rng.uniform();
		const auto r = min_ranks(e);
		for (int s = 0; s < 20; ++s) ranks["d" + std::to_string(d)][specs[static_cast<std::size_t>(s)]] = r[static_cast<std::size_t>(s)];
	}
	double previous = INFINITY;
	for (Index n = 1; n <= 20; ++n) {
		double total = 0.0;
		const int reps = 200;
		for (int rep = 0; rep < reps; ++rep) {
			std::map<std::string, std::vector<std::string>> sel;
			for (const auto &[id, _] : ranks) sel[id] = baseline_random(specs, n, rng);
			total += evaluate_selection(ranks, sel).r;
		}
		const double mean = total / reps;
		// Expected best rank of a random n-subset of 20 is 21 / (n + 1).
		CHECK_THAT(mean, WithinRel(21.0 / (n + 1.0), 0.05));
		CHECK(mean <= previous + 0.05);
		previous = mean;
	}
}
