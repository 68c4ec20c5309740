#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tsens {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Timestamp = std::chrono::sys_seconds;

enum class ErrorCode {
	InvalidArgument,
	InvalidSeries,
	SplitTooLarge,
	SeriesTooShort,
	InvalidPairCount,
	NoTimestamps,
	PeriodTooLong,
	NoSeasonality,
	EmptyPool,
	DegenerateDesign,
	ZeroDenominator,
	UnsupportedAlpha,
	UnknownName,
	PoolMismatch,
	CorpusTooSmall,
	IncompleteGrid,
	FeatureVersionMismatch,
	SchemaError,
	EmptyStore,
	ConfigError,
	Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
	Error(ErrorCode code, const std::string &message);
	ErrorCode code() const noexcept { return code_; }

private:
	ErrorCode code_;
};

// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

enum class ColumnKind { numeric, categorical, boolean };
std::string_view to_string(ColumnKind kind);

/// One exogenous column aligned with the target. Categorical values are
/// stored as integer codes indexing `levels`.
struct ExoColumn {
	std::string name;
	ColumnKind kind = ColumnKind::numeric;
	Vector values;
	std::vector<std::string> levels;
};

/// Regularly observed univariate series with optional timestamps and
/// exogenous columns. Immutable once constructed; the constructor validates
/// alignment, constant spacing and the absence of missing target values.
class TimeSeries {
public:
	TimeSeries() = default;
	TimeSeries(std::string id, Vector target, std::optional<std::vector<Timestamp>> timestamps = std::nullopt,
	           std::vector<ExoColumn> exogenous = {}, std::optional<int> frequency_hint = std::nullopt,
	           std::string source = "other");

	const std::string &id() const noexcept { return id_; }
	const Vector &target() const noexcept { return target_; }
	const std::optional<std::vector<Timestamp>> &timestamps() const noexcept { return timestamps_; }
	const std::vector<ExoColumn> &exogenous() const noexcept { return exogenous_; }
	std::optional<int> frequency_hint() const noexcept { return frequency_hint_; }
	const std::string &source() const noexcept { return source_; }
	Index size() const noexcept { return target_.size(); }

	/// Spacing between consecutive timestamps, if there are at least two.
	std::optional<std::chrono::seconds> spacing() const;

	/// Rows [begin, end), all columns cut identically.
	TimeSeries slice(Index begin, Index end) const;

private:
	std::string id_;
	Vector target_;
	std::optional<std::vector<Timestamp>> timestamps_;
	std::vector<ExoColumn> exogenous_;
	std::optional<int> frequency_hint_;
	std::string source_ = "other";
};

/// Calendar-month step between two timestamps that share day-of-month and
/// time of day (monthly, quarterly, yearly data).
std::optional<int> calendar_month_step(Timestamp a, Timestamp b);

/// Either an explicit test horizon or a train fraction.
struct SplitSpec {
	std::optional<Index> horizon;
	std::optional<double> train_fraction;

	Index horizon_for(Index length) const;
};

struct TrainTest {
	TimeSeries train;
	TimeSeries test;
};

TrainTest split(const TimeSeries &series, const SplitSpec &spec);
TrainTest split(const TimeSeries &series, Index horizon);

/// Internal split of the training data: etrain = [0, etrain_end),
/// evalid = [etrain_end, evalid_end) with evalid_end the training length.
struct EnsembleTrainSplit {
	Index etrain_end = 0;
	Index evalid_end = 0;

	Index etrain_size() const noexcept { return etrain_end; }
	Index evalid_size() const noexcept { return evalid_end - etrain_end; }
};

inline constexpr double kDefaultValidFraction = 0.25;

/// |evalid| = ceil(valid_fraction * n), capped at max(2m, 10) when a primary
/// period m is supplied.
EnsembleTrainSplit ensemble_split(Index train_size, double valid_fraction = kDefaultValidFraction,
                                  std::optional<int> period = std::nullopt);

/// Per-model predictions over a shared horizon; row i belongs to model_ids[i].
struct ForecastMatrix {
	std::vector<std::string> model_ids;
	Matrix values;
	Index horizon_start = 0;

	Index models() const noexcept { return values.rows(); }
	Index horizon() const noexcept { return values.cols(); }
	std::optional<Index> find(std::string_view id) const;
	Eigen::RowVectorXd row(std::string_view id) const;
	ForecastMatrix subset(const std::vector<Index> &rows) const;
	void validate() const;
};

/// Deterministic randomness. Draws are built from raw 64-bit engine output so
/// results do not depend on the standard library's distribution code.
class Rng {
public:
	explicit Rng(std::uint64_t seed) : engine_(seed) {}

	std::uint64_t next() { return engine_(); }
	double uniform();
	double normal();
	Index uniform_index(Index n);

private:
	std::mt19937_64 engine_;
	std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Stable seed for a named sub-task (FNV-1a over the tag, mixed with the seed).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

} // namespace tsens
