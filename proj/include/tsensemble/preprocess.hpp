#pragma once

#include "tsensemble/core.hpp"

#include <filesystem>
#include <set>

namespace tsens {

enum class SeasonalMode { additive, multiplicative };
std::string_view to_string(SeasonalMode mode);

struct SeasonalityInfo {
	std::optional<int> primary_period;
	std::optional<int> secondary_period;
	SeasonalMode primary_mode = SeasonalMode::additive;
	SeasonalMode secondary_mode = SeasonalMode::additive;

	bool has_primary() const noexcept { return primary_period.has_value(); }
	/// Primary period, or 1 when no seasonality was detected.
	int period_or_one() const noexcept { return primary_period.value_or(1); }
};

/// Periodogram |X_j|^2 / T of the demeaned, linearly detrended series for
/// j = 1..floor(T/2). Entry j-1 belongs to frequency j/T.
Vector periodogram(const Eigen::Ref<const Vector> &y);

/// Periodogram ordinate at an arbitrary (non-bin) frequency in cycles per
/// sample, computed on the same detrended series.
double periodogram_at(const Eigen::Ref<const Vector> &y, double frequency);

/// Strongest significant periodic component. A peak is significant when its
/// ordinate is at least 10x the median ordinate and the implied period fits
/// at least three times into the series. Returns nullopt otherwise.
std::optional<int> dominant_period(const Eigen::Ref<const Vector> &y);

/// Lower residual variance wins between an additive and a multiplicative
/// period-wise decomposition. Non-positive data is always additive.
SeasonalMode choose_mode(const Eigen::Ref<const Vector> &y, int period);

/// Period-wise mean profile: seasonal index per position t mod period, taken
/// from the series around a centred moving-average trend. Additive indices
/// sum to zero, multiplicative ones average to one.
Vector seasonal_indices(const Eigen::Ref<const Vector> &y, int period, SeasonalMode mode);

/// Subtracts (additive) or divides out (multiplicative) the period-wise means.
Vector remove_seasonality(const Eigen::Ref<const Vector> &y, int period, SeasonalMode mode);

/// Two-pass periodogram detection. Needs at least 8 points, otherwise the
/// result is empty.
SeasonalityInfo detect_seasonality(const Eigen::Ref<const Vector> &y);

/// Centred moving average of length `window` (2 x window for even windows).
/// Entries without a full window are NaN.
Vector centered_moving_average(const Eigen::Ref<const Vector> &y, int window);

/// sin/cos pairs for k = 1..num_pairs on t = start..start+length-1:
/// column 2(k-1) is sin(2 pi k t / period), column 2(k-1)+1 the cosine.
struct FourierTerms {
	int period = 0;
	int num_pairs = 0;
	Matrix columns;

	std::vector<std::string> names() const;
};

FourierTerms make_fourier_terms(int period, Index length, int num_pairs, Index start = 0);

inline constexpr int kFourierPeriodThreshold = 24;

/// Fourier blocks for every detected seasonality longer than the threshold,
/// with min(4, period/2) pairs each, evaluated on [start, start+length).
Matrix seasonal_fourier_features(const SeasonalityInfo &info, Index start, Index length,
                                 std::vector<std::string> *names = nullptr);

using HolidaySet = std::set<std::chrono::sys_days>;

/// Reads ISO-8601 dates (YYYY-MM-DD), one per line; blank lines and '#'
/// comments are ignored.
HolidaySet read_holidays(const std::filesystem::path &path);

std::chrono::sys_days parse_date(std::string_view text);
/// Accepts "YYYY-MM-DD", "YYYY-MM-DD hh:mm[:ss]" and "YYYY-MM-DDThh:mm[:ss][Z]".
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

/// Integer-coded calendar columns. day_of_week is 0 for Monday; month_of_year
/// and day_of_month are 1-based; booleans are 0/1.
struct CalendarFeatures {
	std::vector<std::string> names;
	Matrix columns;
};

/// Calendar columns for arbitrary timestamps; `spacing` decides which
/// columns are derivable.
CalendarFeatures calendar_features(const std::vector<Timestamp> &timestamps, std::chrono::seconds spacing,
                                   const HolidaySet *holidays = nullptr);

CalendarFeatures extract_calendar(const TimeSeries &series, const HolidaySet *holidays = nullptr);

/// Continues a regular timestamp grid by `count` steps past `last`.
std::vector<Timestamp> extend_timestamps(const std::vector<Timestamp> &timestamps, Index count);

} // namespace tsens
