#include "catch_amalgamated.hpp"

#include "tsensemble/core.hpp"

using namespace tsens;
using Catch::Matchers::WithinAbs;

namespace {

Vector vec(std::initializer_list<double> v) {
	Vector out(static_cast<Index>(v.size()));
	Index i = 0;
	for (double x : v) out[i++] = x;
	return out;
}

template <typename F>
ErrorCode code_of(F &&f) {
	try {
		f();
	} catch (const Error &e) {
		return e.code();
	}
	FAIL("expected an Error");
	return ErrorCode::InvalidArgument;
}

} // namespace

TEST_CASE("split keeps order and cuts exogenous columns alike", "[core]") {
	ExoColumn exo{"cat", ColumnKind::categorical, vec({0, 1, 2, 3}), {"a", "b", "c", "d"}};
	TimeSeries s("s", vec({1, 2, 3, 4}), std::nullopt, {exo});
	auto tt = split(s, 1);
	CHECK(tt.train.target() == vec({1, 2, 3}));
	CHECK(tt.test.target() == vec({4}));
	CHECK(tt.train.exogenous()[0].values == vec({0, 1, 2}));
	CHECK(tt.test.exogenous()[0].values == vec({3}));
	CHECK(tt.test.exogenous()[0].levels == exo.levels);

	auto five = split(TimeSeries("f", vec({1, 2, 3, 4, 5})), 2);
	CHECK(five.train.target() == vec({1, 2, 3}));
	CHECK(five.test.target() == vec({4, 5}));
}

TEST_CASE("split rejects horizons leaving fewer than two training points", "[core]") {
	CHECK(code_of([] { split(TimeSeries("x", vec({7})), 1); }) == ErrorCode::SplitTooLarge);
	CHECK(code_of([] { split(TimeSeries("x", vec({1, 2, 3})), 2); }) == ErrorCode::SplitTooLarge);
}

TEST_CASE("split concatenation reproduces the series", "[core][property]") {
	Rng rng(3);
	for (int rep = 0; rep < 50; ++rep) {
		const Index n = 3 + rng.uniform_index(60);
		Vector y(n);
		for (Index i = 0; i < n; ++i) y[i] = rng.normal();
		TimeSeries s("p", y);
		const Index h = 1 + rng.uniform_index(n - 2);
		auto tt = split(s, h);
		Vector joined(n);
		joined << tt.train.target(), tt.test.target();
		CHECK(joined == y);
	}
}

TEST_CASE("train fraction splits", "[core]") {
	SplitSpec spec{std::nullopt, 0.8};
	CHECK(spec.horizon_for(100) == 20);
	CHECK(spec.horizon_for(10) == 2);
}

TEST_CASE("ensemble_split sizes", "[core]") {
	CHECK(ensemble_split(100, 0.2).evalid_size() == 20);
	CHECK(ensemble_split(100, 0.2).etrain_size() == 80);
	CHECK(ensemble_split(5, 0.2).evalid_size() == 1);
	CHECK(code_of([] { ensemble_split(3, 0.5); }) == ErrorCode::SeriesTooShort);
	// With a primary period the validation window is capped at max(2m, 10).
	CHECK(ensemble_split(400, 0.25, 12).evalid_size() == 24);
	CHECK(ensemble_split(400, 0.25, 2).evalid_size() == 10);
	CHECK(ensemble_split(20, 0.25, 12).evalid_size() == 5);
}

TEST_CASE("TimeSeries validation", "[core]") {
	using namespace std::chrono;
	const Timestamp t0{sys_days{2020y / 1 / 1}};
	CHECK(code_of([] { TimeSeries("x", vec({1, std::nan(""), 3})); }) == ErrorCode::InvalidSeries);
	CHECK(code_of([&] { TimeSeries("x", vec({1, 2, 3}), std::vector<Timestamp>{t0, t0 + hours(24)}); }) == ErrorCode::InvalidSeries);
	CHECK(code_of([&] {
		      TimeSeries("x", vec({1, 2, 3}), std::vector<Timestamp>{t0, t0 + hours(24), t0 + hours(72)});
	      }) == ErrorCode::InvalidSeries);
	CHECK(code_of([] { TimeSeries("x", vec({1, 2}), std::nullopt, {ExoColumn{"e", ColumnKind::numeric, vec({1}), {}}}); }) ==
	      ErrorCode::InvalidSeries);
	// Calendar months have uneven lengths but a constant month step.
	std::vector<Timestamp> months{Timestamp{sys_days{2020y / 1 / 1}}, Timestamp{sys_days{2020y / 2 / 1}},
	                              Timestamp{sys_days{2020y / 3 / 1}}};
	TimeSeries monthly("m", vec({1, 2, 3}), months);
	CHECK(monthly.size() == 3);
	CHECK(calendar_month_step(months[0], months[1]) == 1);
}

TEST_CASE("ForecastMatrix lookup and subset", "[core]") {
	ForecastMatrix f;
	f.model_ids = {"a", "b", "c"};
	f.values.resize(3, 2);
	f.values << 1, 2, 3, 4, 5, 6;
	CHECK(f.find("b") == 1);
	CHECK_FALSE(f.find("z").has_value());
	CHECK(f.row("c")(1) == 6);
	auto s = f.subset({2, 0});
	CHECK(s.model_ids == std::vector<std::string>{"c", "a"});
	CHECK(s.values(1, 0) == 1);
	f.values(0, 0) = std::numeric_limits<double>::infinity();
	CHECK_THROWS_AS(f.validate(), Error);
}

TEST_CASE("Rng is reproducible and well spread", "[core]") {
	Rng a(99);
	Rng b(99);
	for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
	Rng r(1);
	double sum = 0.0, sq = 0.0;
	const int n = 200000;
	for (int i = 0; i < n; ++i) {
		const double z = r.normal();
		sum += z;
		sq += z * z;
	}
	CHECK_THAT(sum / n, WithinAbs(0.0, 0.01));
	CHECK_THAT(sq / n, WithinAbs(1.0, 0.02));
	for (int i = 0; i < 1000; ++i) {
		const double u = r.uniform();
		CHECK((u >= 0.0 && u < 1.0));
		const Index k = r.uniform_index(7);
		CHECK((k >= 0 && k < 7));
	}
}

TEST_CASE("derive_seed separates tags and seeds", "[core]") {
	CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
	CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
	CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}
