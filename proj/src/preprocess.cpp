#include "tsensemble/preprocess.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>

namespace tsens {

namespace {

constexpr double kPeakFactor = 10.0;
constexpr int kMinCycles = 3;

Vector detrend(const Eigen::Ref<const Vector> &y) {
	const Index n = y.size();
	Vector t = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
	const double tm = t.mean();
	const double ym = y.mean();
	const double stt = (t.array() - tm).square().sum();
	const double slope = stt > 0.0 ? ((t.array() - tm) * (y.array() - ym)).sum() / stt : 0.0;
	return (y.array() - ym - slope * (t.array() - tm)).matrix();
}

bool is_flat(const Vector &detrended, const Eigen::Ref<const Vector> &y) {
	const double scale = y.array().abs().maxCoeff();
	return detrended.array().abs().maxCoeff() <= 1e-10 * std::max(scale, 1e-300);
}

double median(std::vector<double> v) {
	if (v.empty()) {
		return 0.0;
	}
	const std::size_t mid = v.size() / 2;
	std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
	double m = v[mid];
	if (v.size() % 2 == 0) {
		m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
	}
	return m;
}

double power_at(const Vector &x, double frequency) {
	std::complex<double> acc{0.0, 0.0};
	const double w = -2.0 * std::numbers::pi * frequency;
	for (Index t = 0; t < x.size(); ++t) {
		acc += x[t] * std::polar(1.0, w * static_cast<double>(t));
	}
	return std::norm(acc) / static_cast<double>(x.size());
}

Vector periodogram_of(const Vector &x) {
	const Index n = x.size();
	Eigen::FFT<double> fft;
	std::vector<double> in(x.data(), x.data() + n);
	std::vector<std::complex<double>> out;
	fft.fwd(out, in);
	const Index half = n / 2;
	Vector p(half);
	for (Index j = 1; j <= half; ++j) {
		p[j - 1] = std::norm(out[static_cast<std::size_t>(j)]) / static_cast<double>(n);
	}
	return p;
}

Vector residual_after(const Eigen::Ref<const Vector> &y, const Vector &trend, const Vector &idx, int period,
                      SeasonalMode mode) {
	Vector r(y.size());
	for (Index t = 0; t < y.size(); ++t) {
		const double s = idx[t % period];
		r[t] = mode == SeasonalMode::additive ? y[t] - trend[t] - s : y[t] - trend[t] * s;
	}
	return r;
}

} // namespace

std::string_view to_string(SeasonalMode mode) {
	return mode == SeasonalMode::additive ? "additive" : "multiplicative";
}

Vector periodogram(const Eigen::Ref<const Vector> &y) {
	return periodogram_of(detrend(y));
}

double periodogram_at(const Eigen::Ref<const Vector> &y, double frequency) {
	return power_at(detrend(y), frequency);
}

std::optional<int> dominant_period(const Eigen::Ref<const Vector> &y) {
	const Index n = y.size();
	if (n < 8) {
		return std::nullopt;
	}
	const Vector x = detrend(y);
	if (is_flat(x, y)) {
		return std::nullopt;
	}
	const Vector p = periodogram_of(x);
	const Index half = p.size();
	const double threshold = kPeakFactor * median(std::vector<double>(p.data(), p.data() + half));

	Index best = -1;
	for (Index j = kMinCycles; j <= half; ++j) {
		const double v = p[j - 1];
		if (v < threshold || v <= 0.0) {
			continue;
		}
		const bool left_ok = v >= p[j - 2];
		const bool right_ok = j == half || v >= p[j];
		if (left_ok && right_ok && (best < 0 || v > p[best - 1])) {
			best = j;
		}
	}
	if (best < 0) {
		return std::nullopt;
	}
	// The bin grid is coarse for long periods; refine over the integer periods
	// between the neighbouring bins.
	const double dn = static_cast<double>(n);
	const int max_period = static_cast<int>(n / kMinCycles);
	int lo = static_cast<int>(std::floor(dn / static_cast<double>(best + 1)));
	int hi = static_cast<int>(std::ceil(dn / static_cast<double>(best - 1)));
	lo = std::max(lo, 2);
	hi = std::min(hi, max_period);
	int period = static_cast<int>(std::lround(dn / static_cast<double>(best)));
	double best_power = -1.0;
	for (int cand = lo; cand <= hi; ++cand) {
		const double pw = power_at(x, 1.0 / cand);
		if (pw > best_power) {
			best_power = pw;
			period = cand;
		}
	}
	if (period < 2 || period > max_period) {
		return std::nullopt;
	}
	return period;
}

Vector centered_moving_average(const Eigen::Ref<const Vector> &y, int window) {
	const Index n = y.size();
	Vector out = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
	if (window < 1 || n < window + (window % 2 == 0 ? 1 : 0)) {
		return out;
	}
	if (window % 2 == 1) {
		const Index h = window / 2;
		for (Index t = h; t + h < n; ++t) {
			out[t] = y.segment(t - h, window).mean();
		}
	} else {
		const Index h = window / 2;
		for (Index t = h; t + h < n; ++t) {
			double s = 0.5 * y[t - h] + 0.5 * y[t + h];
			s += y.segment(t - h + 1, window - 1).sum();
			out[t] = s / window;
		}
	}
	return out;
}

Vector seasonal_indices(const Eigen::Ref<const Vector> &y, int period, SeasonalMode mode) {
	if (period < 2) {
		throw Error(ErrorCode::InvalidArgument, "seasonal period must be at least 2");
	}
	const Index n = y.size();
	const bool mult = mode == SeasonalMode::multiplicative;
	Vector trend = centered_moving_average(y, period);
	const bool have_trend = trend.array().isFinite().any();
	Vector sum = Vector::Zero(period);
	Eigen::VectorXi count = Eigen::VectorXi::Zero(period);
	const double level = y.mean();
	for (Index t = 0; t < n; ++t) {
		double base = have_trend ? trend[t] : level;
		if (!std::isfinite(base)) {
			continue;
		}
		sum[t % period] += mult ? y[t] / base : y[t] - base;
		count[t % period] += 1;
	}
	Vector idx(period);
	for (int r = 0; r < period; ++r) {
		idx[r] = count[r] > 0 ? sum[r] / count[r] : (mult ? 1.0 : 0.0);
	}
	if (mult) {
		const double m = idx.mean();
		if (m > 0.0) {
			idx /= m;
		}
	} else {
		idx.array() -= idx.mean();
	}
	return idx;
}

SeasonalMode choose_mode(const Eigen::Ref<const Vector> &y, int period) {
	if (y.minCoeff() <= 0.0) {
		return SeasonalMode::additive;
	}
	Vector trend = centered_moving_average(y, period);
	if (!trend.array().isFinite().any()) {
		return SeasonalMode::additive;
	}
	const Vector add = seasonal_indices(y, period, SeasonalMode::additive);
	const Vector mul = seasonal_indices(y, period, SeasonalMode::multiplicative);
	const Vector ra = residual_after(y, trend, add, period, SeasonalMode::additive);
	const Vector rm = residual_after(y, trend, mul, period, SeasonalMode::multiplicative);
	double va = 0.0;
	double vm = 0.0;
	for (Index t = 0; t < y.size(); ++t) {
		if (std::isfinite(trend[t])) {
			va += ra[t] * ra[t];
			vm += rm[t] * rm[t];
		}
	}
	return vm < va ? SeasonalMode::multiplicative : SeasonalMode::additive;
}

Vector remove_seasonality(const Eigen::Ref<const Vector> &y, int period, SeasonalMode mode) {
	const Vector idx = seasonal_indices(y, period, mode);
	Vector out(y.size());
	for (Index t = 0; t < y.size(); ++t) {
		const double s = idx[t % period];
		out[t] = mode == SeasonalMode::additive ? y[t] - s : y[t] / s;
	}
	return out;
}

SeasonalityInfo detect_seasonality(const Eigen::Ref<const Vector> &y) {
	SeasonalityInfo info;
	if (y.size() < 8) {
		return info;
	}
	auto first = dominant_period(y);
	if (!first) {
		return info;
	}
	info.primary_period = *first;
	info.primary_mode = choose_mode(y, *first);
	const Vector rest = remove_seasonality(y, *first, info.primary_mode);
	auto second = dominant_period(rest);
	if (second && *second != *first) {
		info.secondary_period = *second;
		info.secondary_mode = choose_mode(rest, *second);
	}
	return info;
}

std::vector<std::string> FourierTerms::names() const {
	std::vector<std::string> out;
	for (int k = 1; k <= num_pairs; ++k) {
		out.push_back("fourier_" + std::to_string(period) + "_sin" + std::to_string(k));
		out.push_back("fourier_" + std::to_string(period) + "_cos" + std::to_string(k));
	}
	return out;
}

FourierTerms make_fourier_terms(int period, Index length, int num_pairs, Index start) {
	if (period < 2) {
		throw Error(ErrorCode::InvalidArgument, "Fourier period must be at least 2");
	}
	if (num_pairs < 1 || num_pairs > period / 2) {
		throw Error(ErrorCode::InvalidPairCount, "need 1 <= pairs <= period/2, got " + std::to_string(num_pairs));
	}
	FourierTerms f;
	f.period = period;
	f.num_pairs = num_pairs;
	f.columns.resize(length, 2 * num_pairs);
	for (Index i = 0; i < length; ++i) {
		const auto t = static_cast<double>(start + i);
		for (int k = 1; k <= num_pairs; ++k) {
			const double angle = 2.0 * std::numbers::pi * k * t / period;
			f.columns(i, 2 * (k - 1)) = std::sin(angle);
			f.columns(i, 2 * (k - 1) + 1) = std::cos(angle);
		}
	}
	return f;
}

Matrix seasonal_fourier_features(const SeasonalityInfo &info, Index start, Index length,
                                 std::vector<std::string> *names) {
	std::vector<Matrix> blocks;
	for (auto p : {info.primary_period, info.secondary_period}) {
		if (p && *p > kFourierPeriodThreshold) {
			auto f = make_fourier_terms(*p, length, std::min(4, *p / 2), start);
			if (names) {
				auto n = f.names();
				names->insert(names->end(), n.begin(), n.end());
			}
			blocks.push_back(std::move(f.columns));
		}
	}
	Index cols = 0;
	for (const auto &b : blocks) {
		cols += b.cols();
	}
	Matrix out(length, cols);
	Index c = 0;
	for (const auto &b : blocks) {
		out.middleCols(c, b.cols()) = b;
		c += b.cols();
	}
	return out;
}

namespace {

int parse_int(std::string_view s, std::string_view whole) {
	int v = 0;
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
	if (ec != std::errc{} || ptr != s.data() + s.size()) {
		throw Error(ErrorCode::SchemaError, "cannot parse date/time '" + std::string(whole) + "'");
	}
	return v;
}

std::string_view trim(std::string_view s) {
	while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"')) {
		s.remove_prefix(1);
	}
	while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
		s.remove_suffix(1);
	}
	return s;
}

} // namespace

std::chrono::sys_days parse_date(std::string_view text) {
	using namespace std::chrono;
	text = trim(text);
	if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
		throw Error(ErrorCode::SchemaError, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
	}
	year_month_day ymd{year{parse_int(text.substr(0, 4), text)}, month{static_cast<unsigned>(parse_int(text.substr(5, 2), text))},
	                   day{static_cast<unsigned>(parse_int(text.substr(8, 2), text))}};
	if (!ymd.ok()) {
		throw Error(ErrorCode::SchemaError, "invalid calendar date '" + std::string(text) + "'");
	}
	return sys_days{ymd};
}

Timestamp parse_timestamp(std::string_view text) {
	using namespace std::chrono;
	text = trim(text);
	if (text.size() < 10) {
		throw Error(ErrorCode::SchemaError, "cannot parse timestamp '" + std::string(text) + "'");
	}
	Timestamp t{parse_date(text.substr(0, 10))};
	auto rest = text.substr(10);
	if (rest.empty()) {
		return t;
	}
	if (rest.front() != 'T' && rest.front() != ' ') {
		throw Error(ErrorCode::SchemaError, "cannot parse timestamp '" + std::string(text) + "'");
	}
	rest.remove_prefix(1);
	if (!rest.empty() && rest.back() == 'Z') {
		rest.remove_suffix(1);
	}
	if (rest.size() != 5 && rest.size() != 8) {
		throw Error(ErrorCode::SchemaError, "cannot parse time of day in '" + std::string(text) + "'");
	}
	const int hh = parse_int(rest.substr(0, 2), text);
	const int mm = parse_int(rest.substr(3, 2), text);
	const int ss = rest.size() == 8 ? parse_int(rest.substr(6, 2), text) : 0;
	if (rest[2] != ':' || (rest.size() == 8 && rest[5] != ':') || hh > 23 || mm > 59 || ss > 60) {
		throw Error(ErrorCode::SchemaError, "invalid time of day in '" + std::string(text) + "'");
	}
	return t + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_timestamp(Timestamp t) {
	using namespace std::chrono;
	auto d = floor<days>(t);
	year_month_day ymd{d};
	hh_mm_ss hms{t - d};
	char buf[64];
	std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
	              static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
	              static_cast<long>(hms.seconds().count()));
	return buf;
}

HolidaySet read_holidays(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in) {
		throw Error(ErrorCode::Io, "cannot open holiday file " + path.string());
	}
	HolidaySet out;
	std::string line;
	while (std::getline(in, line)) {
		auto s = trim(line);
		if (s.empty() || s.front() == '#') {
			continue;
		}
		out.insert(parse_date(s));
	}
	return out;
}

CalendarFeatures calendar_features(const std::vector<Timestamp> &timestamps, std::chrono::seconds spacing,
                                   const HolidaySet *holidays) {
	using namespace std::chrono;
	const auto s = spacing.count();
	constexpr long long kHour = 3600;
	constexpr long long kDay = 86400;
	const bool minute = s < kHour;
	const bool hour = s < kDay;
	const bool weekday = s < 7 * kDay;
	const bool mday = s < 28 * kDay;
	const bool month = s < 365 * kDay;
	const bool holiday = holidays != nullptr && weekday;

	CalendarFeatures out;
	if (minute) out.names.push_back("minute_of_hour");
	if (hour) out.names.push_back("hour_of_day");
	if (weekday) {
		out.names.push_back("day_of_week");
		out.names.push_back("is_weekend");
	}
	if (mday) out.names.push_back("day_of_month");
	if (month) out.names.push_back("month_of_year");
	if (holiday) {
		out.names.push_back("is_holiday");
		out.names.push_back("is_workday");
	}
	const auto n = static_cast<Index>(timestamps.size());
	out.columns.resize(n, static_cast<Index>(out.names.size()));
	for (Index i = 0; i < n; ++i) {
		const auto t = timestamps[static_cast<std::size_t>(i)];
		const auto d = floor<days>(t);
		const year_month_day ymd{d};
		const hh_mm_ss hms{t - d};
		const unsigned dow = std::chrono::weekday{d}.iso_encoding() - 1;
		const bool weekend = dow >= 5;
		Index c = 0;
		if (minute) out.columns(i, c++) = static_cast<double>(hms.minutes().count());
		if (hour) out.columns(i, c++) = static_cast<double>(hms.hours().count());
		if (weekday) {
			out.columns(i, c++) = dow;
			out.columns(i, c++) = weekend ? 1.0 : 0.0;
		}
		if (mday) out.columns(i, c++) = static_cast<double>(unsigned(ymd.day()));
		if (month) out.columns(i, c++) = static_cast<double>(unsigned(ymd.month()));
		if (holiday) {
			const bool h = holidays->contains(d);
			out.columns(i, c++) = h ? 1.0 : 0.0;
			out.columns(i, c++) = (!h && !weekend) ? 1.0 : 0.0;
		}
	}
	return out;
}

CalendarFeatures extract_calendar(const TimeSeries &series, const HolidaySet *holidays) {
	if (!series.timestamps()) {
		throw Error(ErrorCode::NoTimestamps, "series '" + series.id() + "' has no timestamps");
	}
	const auto spacing = series.spacing().value_or(std::chrono::seconds{86400});
	return calendar_features(*series.timestamps(), spacing, holidays);
}

std::vector<Timestamp> extend_timestamps(const std::vector<Timestamp> &timestamps, Index count) {
	using namespace std::chrono;
	if (timestamps.size() < 2) {
		throw Error(ErrorCode::InvalidArgument, "need two timestamps to continue the grid");
	}
	std::vector<Timestamp> out;
	out.reserve(static_cast<std::size_t>(count));
	const auto a = timestamps[timestamps.size() - 2];
	const auto b = timestamps.back();
	const auto step = b - a;
	auto months = calendar_month_step(a, b);
	if (months && step >= days{28}) {
		const auto d = floor<days>(b);
		const auto tod = b - d;
		year_month_day ymd{d};
		for (Index i = 1; i <= count; ++i) {
			auto next = ymd.year() / ymd.month() / ymd.day() + std::chrono::months{*months * i};
			out.push_back(Timestamp{sys_days{next}} + tod);
		}
	} else {
		for (Index i = 1; i <= count; ++i) {
			out.push_back(b + step * i);
		}
	}
	return out;
}

} // namespace tsens
