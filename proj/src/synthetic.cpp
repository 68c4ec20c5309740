#include "tsensemble/synthetic.hpp"

#include <array>
#include <cmath>

namespace tsens {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Timestamp day(int y, unsigned m, unsigned d) {
	using namespace std::chrono;
	return Timestamp{sys_days{year{y} / month{m} / d}};
}

std::vector<Timestamp> regular_grid(Timestamp start, std::chrono::seconds step, Index n) {
	std::vector<Timestamp> out;
	for (Index i = 0; i < n; ++i) out.push_back(start + step * i);
	return out;
}

std::vector<Timestamp> monthly_grid(int y, unsigned m, int months_step, Index n) {
	using namespace std::chrono;
	std::vector<Timestamp> out;
	year_month ym = year{y} / month{m};
	for (Index i = 0; i < n; ++i) {
		out.push_back(Timestamp{sys_days{ym / 1}});
		ym += months{months_step};
	}
	return out;
}

double uniform(Rng &rng, double lo, double hi) {
	return lo + (hi - lo) * rng.uniform();
}

} // namespace

Vector synthetic_sine(Index length, double period, double amplitude, double level, double noise_sd, Rng &rng) {
	Vector y(length);
	for (Index t = 0; t < length; ++t) {
		y[t] = level + amplitude * std::sin(kTwoPi * static_cast<double>(t) / period) + noise_sd * rng.normal();
	}
	return y;
}

Vector synthetic_ar1(Index length, double phi, double mean, double sd, Rng &rng) {
	Vector y(length);
	double x = sd / std::sqrt(std::max(1e-12, 1.0 - phi * phi)) * rng.normal();
	for (Index t = 0; t < length; ++t) {
		x = phi * x + sd * rng.normal();
		y[t] = mean + x;
	}
	return y;
}

TimeSeries synthetic_weekday_series(Index length, std::uint64_t seed, double noise_sd) {
	Rng rng(seed);
	static constexpr std::array<double, 7> effect{0.0, 2.0, 3.0, 2.5, 6.0, 12.0, 9.0};
	Vector y(length);
	for (Index t = 0; t < length; ++t) {
		y[t] = 50.0 + effect[static_cast<std::size_t>(t % 7)] + noise_sd * rng.normal();
	}
	auto ts = regular_grid(day(2020, 1, 6), std::chrono::hours(24), length);
	return TimeSeries("weekday_" + std::to_string(seed), std::move(y), std::move(ts), {}, 7, "m5");
}

std::vector<TimeSeries> synthetic_corpus(const SyntheticCorpusSpec &spec) {
	std::vector<TimeSeries> out;
	for (Index i = 0; i < spec.count; ++i) {
		Rng rng(derive_seed(spec.seed, "series" + std::to_string(i)));
		const Index n = spec.min_length + rng.uniform_index(spec.max_length - spec.min_length + 1);
		const int regime = static_cast<int>(i % 5);
		char idbuf[32];
		std::snprintf(idbuf, sizeof idbuf, "syn%04d", static_cast<int>(i));
		const std::string id(idbuf);
		Vector y(n);
		std::optional<std::vector<Timestamp>> ts;
		std::vector<ExoColumn> exo;
		std::string source;
		std::optional<int> freq;
		switch (regime) {
		case 0: {
			static constexpr std::array<int, 4> periods{4, 7, 12, 24};
			const int m = periods[static_cast<std::size_t>(rng.uniform_index(4))];
			Vector profile(m);
			for (int k = 0; k < m; ++k) profile[k] = rng.normal();
			profile.array() -= profile.mean();
			profile /= std::max(1e-9, profile.cwiseAbs().maxCoeff());
			const double level = uniform(rng, 50.0, 200.0);
			const double amp = uniform(rng, 0.1, 0.4) * level;
			const double slope = uniform(rng, -0.2, 0.5);
			const double sd = uniform(rng, 0.02, 0.1) * amp;
			const bool mult = rng.uniform() < 0.5;
			for (Index t = 0; t < n; ++t) {
				const double base = level + slope * static_cast<double>(t);
				const double s = profile[t % m];
				y[t] = (mult ? base * (1.0 + (amp / level) * s) : base + amp * s) + sd * rng.normal();
			}
			switch (m) {
			case 4: ts = monthly_grid(1990, 1, 3, n); source = "m3"; break;
			case 12: ts = monthly_grid(1995, 1, 1, n); source = "m4"; break;
			case 7: ts = regular_grid(day(2018, 3, 5), std::chrono::hours(24), n); source = "m4"; break;
			default: ts = regular_grid(day(2019, 6, 3), std::chrono::hours(1), n); source = "m4"; break;
			}
			freq = m;
			break;
		}
		case 1: {
			const double drift = uniform(rng, -0.5, 1.5);
			const double sd = uniform(rng, 0.5, 3.0);
			double v = uniform(rng, 50.0, 150.0);
			for (Index t = 0; t < n; ++t) {
				v += drift + sd * rng.normal();
				y[t] = v;
			}
			ts = monthly_grid(2000, 1, 1, n);
			source = "fred";
			break;
		}
		case 2: {
			const double level = uniform(rng, 20.0, 100.0);
			const double sd = uniform(rng, 0.05, 0.3) * level;
			for (Index t = 0; t < n; ++t) y[t] = level + sd * rng.normal();
			ts = monthly_grid(1985, 1, 12, n);
			source = "m3";
			break;
		}
		case 3: {
			const double phi = uniform(rng, 0.3, 0.95);
			y = synthetic_ar1(n, phi, uniform(rng, 30.0, 120.0), uniform(rng, 1.0, 5.0), rng);
			source = "other";
			break;
		}
		default: {
			static constexpr std::array<double, 7> week{0.0, 1.0, 1.5, 1.0, 3.0, 7.0, 5.0};
			const double scale = uniform(rng, 1.0, 4.0);
			const double lift = uniform(rng, 5.0, 20.0);
			const double elasticity = uniform(rng, 2.0, 6.0);
			const double sd = uniform(rng, 0.5, 2.0);
			Vector promo(n);
			Vector price(n);
			Vector event(n);
			double p = 10.0;
			for (Index t = 0; t < n; ++t) {
				promo[t] = rng.uniform() < 0.2 ? 1.0 : 0.0;
				p = std::clamp(p + 0.2 * rng.normal(), 7.0, 13.0);
				price[t] = p;
				event[t] = static_cast<double>(rng.uniform_index(3));
				y[t] = 60.0 + scale * week[static_cast<std::size_t>(t % 7)] + lift * promo[t] - elasticity * (p - 10.0) +
				       (event[t] == 2.0 ? 4.0 : 0.0) + sd * rng.normal();
			}
			ts = regular_grid(day(2016, 2, 1), std::chrono::hours(24), n);
			exo.push_back({"promo", ColumnKind::boolean, promo, {}});
			exo.push_back({"price", ColumnKind::numeric, price, {}});
			exo.push_back({"event", ColumnKind::categorical, event, {"none", "sport", "fair"}});
			source = "m5";
			freq = 7;
			break;
		}
		}
		out.emplace_back(id, std::move(y), std::move(ts), std::move(exo), freq, source);
	}
	return out;
}

} // namespace tsens
