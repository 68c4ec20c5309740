#pragma once

#include "tsensemble/core.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsens {

/// Customized sMAPE in percent: 100 * sum|p - a| / |sum(p + a)|.
/// Returns nullopt when the denominator vanishes.
template <typename A, typename P>
std::optional<double> try_smape(const Eigen::DenseBase<A> &actual, const Eigen::DenseBase<P> &predicted) {
	if (actual.size() != predicted.size() || actual.size() < 1) {
		throw Error(ErrorCode::InvalidArgument, "smape needs equally sized, non-empty inputs");
	}
	double num = 0.0;
	double den = 0.0;
	for (Index i = 0; i < actual.size(); ++i) {
		const double a = actual.derived().coeff(i);
		const double p = predicted.derived().coeff(i);
		num += std::abs(p - a);
		den += p + a;
	}
	if (den == 0.0) {
		return std::nullopt;
	}
	return 100.0 * num / std::abs(den);
}

template <typename A, typename P>
double smape_custom(const Eigen::DenseBase<A> &actual, const Eigen::DenseBase<P> &predicted) {
	auto v = try_smape(actual, predicted);
	if (!v) {
		throw Error(ErrorCode::ZeroDenominator, "sum of actuals and predictions is zero");
	}
	return *v;
}

/// Per-point symmetric absolute percentage error, 100 * |p - a| / |p + a|.
/// sape(0, 0) is 0 by convention.
double sape(double actual, double predicted);

template <typename A, typename P>
double mean_squared_error(const Eigen::DenseBase<A> &actual, const Eigen::DenseBase<P> &predicted) {
	return (actual.derived().array() - predicted.derived().array()).square().mean();
}

template <typename A, typename P>
double mean_absolute_error(const Eigen::DenseBase<A> &actual, const Eigen::DenseBase<P> &predicted) {
	return (actual.derived().array() - predicted.derived().array()).abs().mean();
}

enum class RecordStatus { ok, failed, excluded };
std::string_view to_string(RecordStatus s);
RecordStatus parse_status(std::string_view s);

/// One row of the experiment store.
struct ResultRecord {
	std::string dataset_id;
	std::string algorithm_id;
	double smape = 0.0;
	RecordStatus status = RecordStatus::ok;
	std::optional<double> rank;
	double runtime_ms = 0.0;
	std::string source = "other";
	std::string message;
};

/// Ranks with ties sharing the average of the positions they occupy.
/// Values within a relative 1e-12 of each other count as tied.
std::vector<double> average_ranks(std::span<const double> errors);
/// Competition ranks: a tie group takes the smallest position it occupies.
std::vector<double> min_ranks(std::span<const double> errors);

struct RankTable {
	std::vector<std::string> algorithms;
	std::vector<std::string> datasets;
	/// ranks[d][a], NaN where algorithm a has no usable result on dataset d.
	std::vector<std::vector<double>> ranks;
	std::vector<double> mean_rank;
	std::vector<int> wins;
	std::vector<int> counts;

	std::optional<Index> algorithm_index(std::string_view id) const;
	double rank(std::string_view dataset, std::string_view algorithm) const;
};

/// Ranks every algorithm per dataset. Records with status != ok are skipped.
RankTable rank_results(const std::vector<ResultRecord> &records);

struct CriticalDifference {
	int k = 0;
	int n = 0;
	double alpha = 0.05;
	double q = 0.0;
	double cd_value = 0.0;
};

/// Studentized-range based critical value q_alpha(k) / sqrt(2) for the Nemenyi
/// test, tabulated for k = 2..100 and alpha in {0.05, 0.10}.
double nemenyi_q(int k, double alpha);
CriticalDifference nemenyi_cd(int k, int datasets, double alpha = 0.05);

/// Maximal sets of algorithms whose mean ranks span less than `cd`.
/// Each group lists indices into `mean_ranks`, ordered by rank.
std::vector<std::vector<Index>> cd_groups(std::span<const double> mean_ranks, double cd);

} // namespace tsens
