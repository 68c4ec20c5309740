#include "catch_amalgamated.hpp"

#include "oracles.hpp"
#include "tsensemble/preprocess.hpp"
#include "tsensemble/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tsens;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vector two_season(Index n, double a24, double a168, double noise, Rng &rng) {
	Vector y(n);
	for (Index t = 0; t < n; ++t) {
		y[t] = 50.0 + a24 * std::sin(2 * M_PI * t / 24.0) + a168 * std::sin(2 * M_PI * t / 168.0) + noise * rng.normal();
	}
	return y;
}

} // namespace

TEST_CASE("periodogram matches a direct DFT", "[preprocess]") {
	Rng rng(5);
	for (Index n : {17, 64, 101}) {
		Vector y(n);
		for (Index t = 0; t < n; ++t) y[t] = 0.3 * t + std::sin(t * 0.7) + rng.normal();
		const Vector got = periodogram(y);
		const Vector want = oracle::periodogram(y);
		REQUIRE(got.size() == want.size());
		for (Index j = 0; j < got.size(); ++j) CHECK_THAT(got[j], WithinAbs(want[j], 1e-8 * (1.0 + want[j])));
	}
}

TEST_CASE("a noisy sine of period 12 is detected", "[preprocess]") {
	Rng rng(11);
	const Vector y = synthetic_sine(240, 12, 1.0, 10.0, 0.1, rng);
	const auto info = detect_seasonality(y);
	REQUIRE(info.primary_period.has_value());
	CHECK(*info.primary_period == 12);
}

TEST_CASE("flat series have no seasonality", "[preprocess]") {
	CHECK_FALSE(detect_seasonality(Vector::Constant(100, 3.0)).has_primary());
	CHECK_FALSE(detect_seasonality(Vector::Constant(5, 1.0)).has_primary());
}

TEST_CASE("two seasonalities are both found, stronger first", "[preprocess]") {
	Rng rng(2);
	const Vector y = two_season(2000, 10.0, 5.0, 0.5, rng);
	const auto info = detect_seasonality(y);
	REQUIRE(info.primary_period.has_value());
	REQUIRE(info.secondary_period.has_value());
	CHECK(*info.primary_period == 24);
	CHECK(*info.secondary_period == 168);
}

TEST_CASE("detected periods survive affine transforms", "[preprocess][property]") {
	Rng rng(17);
	for (int rep = 0; rep < 20; ++rep) {
		const int period = std::array{4, 7, 12, 24}[static_cast<std::size_t>(rep % 4)];
		const Vector y = synthetic_sine(200, period, 2.0, 5.0, 0.3, rng);
		const double a = rep % 2 ? -3.5 : 0.25;
		const double b = 100.0 * rng.normal();
		const Vector z = (a * y.array() + b).matrix();
		CHECK(detect_seasonality(y).primary_period == detect_seasonality(z).primary_period);
	}
}

TEST_CASE("removing additive seasonality kills its periodogram peak", "[preprocess][property]") {
	Rng rng(8);
	for (int period : {4, 6, 12}) {
		Vector pattern(period);
		for (int k = 0; k < period; ++k) pattern[k] = rng.normal();
		Vector y(period * 20);
		for (Index t = 0; t < y.size(); ++t) y[t] = 10.0 + pattern[t % period];
		const Vector r = remove_seasonality(y, period, SeasonalMode::additive);
		const Index bin = y.size() / period - 1;
		const double before = periodogram(y)[bin];
		const double after = periodogram(r)[bin];
		CHECK(after <= 0.1 * before);
	}
}

TEST_CASE("seasonal indices normalise", "[preprocess]") {
	Rng rng(4);
	Vector y(96);
	for (Index t = 0; t < y.size(); ++t) y[t] = 20.0 + 0.1 * t + 3.0 * std::sin(2 * M_PI * t / 12.0) + 0.1 * rng.normal();
	CHECK_THAT(seasonal_indices(y, 12, SeasonalMode::additive).sum(), WithinAbs(0.0, 1e-9));
	CHECK_THAT(seasonal_indices(y, 12, SeasonalMode::multiplicative).mean(), WithinAbs(1.0, 1e-9));
	CHECK(choose_mode(y, 12) == SeasonalMode::additive);

	Vector m(96);
	for (Index t = 0; t < m.size(); ++t) m[t] = (20.0 + 2.0 * t) * (1.0 + 0.4 * std::sin(2 * M_PI * t / 12.0));
	CHECK(choose_mode(m, 12) == SeasonalMode::multiplicative);
}

TEST_CASE("Fourier terms", "[preprocess]") {
	const auto f = make_fourier_terms(4, 4, 1);
	const std::array<double, 4> s{0, 1, 0, -1};
	const std::array<double, 4> c{1, 0, -1, 0};
	for (Index t = 0; t < 4; ++t) {
		CHECK_THAT(f.columns(t, 0), WithinAbs(s[static_cast<std::size_t>(t)], 1e-12));
		CHECK_THAT(f.columns(t, 1), WithinAbs(c[static_cast<std::size_t>(t)], 1e-12));
	}
	const auto g = make_fourier_terms(2, 2, 1);
	CHECK_THAT(g.columns(0, 0), WithinAbs(0.0, 1e-12));
	CHECK_THAT(g.columns(1, 0), WithinAbs(0.0, 1e-12));
	CHECK_THAT(g.columns(0, 1), WithinAbs(1.0, 1e-12));
	CHECK_THAT(g.columns(1, 1), WithinAbs(-1.0, 1e-12));
	CHECK_THROWS_MATCHES(make_fourier_terms(4, 4, 0), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::InvalidPairCount; }));

	const auto p = make_fourier_terms(24, 96, 4);
	for (Index t = 0; t + 24 < 96; ++t) {
		for (Index j = 0; j < p.columns.cols(); ++j) CHECK_THAT(p.columns(t, j), WithinAbs(p.columns(t + 24, j), 1e-9));
	}
}

TEST_CASE("Fourier features only for long periods", "[preprocess]") {
	SeasonalityInfo info;
	info.primary_period = 12;
	CHECK(seasonal_fourier_features(info, 0, 10).cols() == 0);
	info.primary_period = 168;
	info.secondary_period = 48;
	std::vector<std::string> names;
	const Matrix f = seasonal_fourier_features(info, 5, 10, &names);
	CHECK(f.rows() == 10);
	CHECK(f.cols() == 16);
	CHECK(names.size() == 16);
}

TEST_CASE("calendar features", "[preprocess]") {
	using namespace std::chrono;
	const std::vector<Timestamp> ts{Timestamp{sys_days{2020y / 1 / 6}}};
	const auto cal = calendar_features(ts, seconds{86400});
	auto col = [&](const CalendarFeatures &c, const std::string &name) {
		auto it = std::find(c.names.begin(), c.names.end(), name);
		REQUIRE(it != c.names.end());
		return c.columns(0, it - c.names.begin());
	};
	CHECK(col(cal, "day_of_week") == 0.0);
	CHECK(col(cal, "is_weekend") == 0.0);
	CHECK(col(cal, "month_of_year") == 1.0);

	HolidaySet hol{sys_days{2020y / 1 / 1}};
	const std::vector<Timestamp> ny{Timestamp{sys_days{2020y / 1 / 1}}};
	const auto h = calendar_features(ny, seconds{86400}, &hol);
	CHECK(col(h, "is_holiday") == 1.0);
	CHECK(col(h, "is_workday") == 0.0);

	CHECK_THROWS_MATCHES(extract_calendar(TimeSeries("x", Vector::Ones(4))), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::NoTimestamps; }));
}

TEST_CASE("holiday files and timestamps", "[preprocess]") {
	const auto path = std::filesystem::temp_directory_path() / "tsens_holidays_test.txt";
	{
		std::ofstream f(path);
		f << "# national\n2020-01-01\n\n2020-12-25\n";
	}
	const auto h = read_holidays(path);
	CHECK(h.size() == 2);
	std::filesystem::remove(path);

	const auto t = parse_timestamp("2021-03-04T05:06:07Z");
	CHECK(format_timestamp(t) == "2021-03-04T05:06:07");
	CHECK(parse_timestamp("2021-03-04 05:06") == parse_timestamp("2021-03-04T05:06:00"));
	CHECK_THROWS_AS(parse_timestamp("yesterday"), Error);

	using namespace std::chrono;
	const std::vector<Timestamp> months{Timestamp{sys_days{2020y / 11 / 1}}, Timestamp{sys_days{2020y / 12 / 1}}};
	const auto ext = extend_timestamps(months, 2);
	REQUIRE(ext.size() == 2);
	CHECK(ext[0] == Timestamp{sys_days{2021y / 1 / 1}});
	CHECK(ext[1] == Timestamp{sys_days{2021y / 2 / 1}});
}
