#pragma once

#include "tsensemble/core.hpp"

namespace tsens {

/// Seeded generators shared by the tests, the acceptance suite and `tsens run`
/// when a config asks for a synthetic corpus.

/// amplitude * sin(2 pi t / period) + level + N(0, noise_sd).
Vector synthetic_sine(Index length, double period, double amplitude, double level, double noise_sd, Rng &rng);

/// Stationary AR(1) around `mean`.
Vector synthetic_ar1(Index length, double phi, double mean, double sd, Rng &rng);

/// Daily series from 2020-01-06 (a Monday) whose level depends on the day of
/// the week, plus N(0, noise_sd) noise. No exogenous columns: the signal is
/// only reachable through calendar features.
TimeSeries synthetic_weekday_series(Index length, std::uint64_t seed, double noise_sd = 1.0);

struct SyntheticCorpusSpec {
	Index count = 300;
	std::uint64_t seed = 7;
	Index min_length = 96;
	Index max_length = 144;
};

/// Mixed regimes cycling through seasonal, trending, noisy, autoregressive
/// and exogenous-driven series, tagged with sources m3, m4, m5, fred, other.
std::vector<TimeSeries> synthetic_corpus(const SyntheticCorpusSpec &spec);

} // namespace tsens
