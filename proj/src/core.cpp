#include "tsensemble/core.hpp"

#include <cmath>
#include <iostream>
#include <mutex>

namespace tsens {

std::string_view to_string(ErrorCode code) {
	switch (code) {
	case ErrorCode::InvalidArgument: return "InvalidArgument";
	case ErrorCode::InvalidSeries: return "InvalidSeries";
	case ErrorCode::SplitTooLarge: return "SplitTooLarge";
	case ErrorCode::SeriesTooShort: return "SeriesTooShort";
	case ErrorCode::InvalidPairCount: return "InvalidPairCount";
	case ErrorCode::NoTimestamps: return "NoTimestamps";
	case ErrorCode::PeriodTooLong: return "PeriodTooLong";
	case ErrorCode::NoSeasonality: return "NoSeasonality";
	case ErrorCode::EmptyPool: return "EmptyPool";
	case ErrorCode::DegenerateDesign: return "DegenerateDesign";
	case ErrorCode::ZeroDenominator: return "ZeroDenominator";
	case ErrorCode::UnsupportedAlpha: return "UnsupportedAlpha";
	case ErrorCode::UnknownName: return "UnknownName";
	case ErrorCode::PoolMismatch: return "PoolMismatch";
	case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
	case ErrorCode::IncompleteGrid: return "IncompleteGrid";
	case ErrorCode::FeatureVersionMismatch: return "FeatureVersionMismatch";
	case ErrorCode::SchemaError: return "SchemaError";
	case ErrorCode::EmptyStore: return "EmptyStore";
	case ErrorCode::ConfigError: return "ConfigError";
	case ErrorCode::Io: return "Io";
	}
	return "Unknown";
}

Error::Error(ErrorCode code, const std::string &message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

namespace {

std::mutex &sink_mutex() {
	static std::mutex m;
	return m;
}

WarningSink &sink_slot() {
	static WarningSink sink;
	return sink;
}

} // namespace

std::optional<int> calendar_month_step(Timestamp a, Timestamp b) {
	using namespace std::chrono;
	auto da = floor<days>(a);
	auto db = floor<days>(b);
	if (a - da != b - db) {
		return std::nullopt;
	}
	year_month_day ya{da};
	year_month_day yb{db};
	if (ya.day() != yb.day()) {
		return std::nullopt;
	}
	int months = (int(yb.year()) - int(ya.year())) * 12 + (int(unsigned(yb.month())) - int(unsigned(ya.month())));
	if (months <= 0) {
		return std::nullopt;
	}
	return months;
}

namespace {

void check_spacing(const std::vector<Timestamp> &ts) {
	if (ts.size() < 2) {
		return;
	}
	for (std::size_t i = 1; i < ts.size(); ++i) {
		if (ts[i] <= ts[i - 1]) {
			throw Error(ErrorCode::InvalidSeries, "timestamps not strictly increasing at row " + std::to_string(i));
		}
	}
	const auto step = ts[1] - ts[0];
	bool constant = true;
	for (std::size_t i = 1; i < ts.size() && constant; ++i) {
		auto dev = (ts[i] - ts[i - 1]) - step;
		constant = std::abs(dev.count()) <= 1;
	}
	if (constant) {
		return;
	}
	auto months = calendar_month_step(ts[0], ts[1]);
	if (months) {
		bool monthly = true;
		for (std::size_t i = 1; i < ts.size() && monthly; ++i) {
			auto m = calendar_month_step(ts[i - 1], ts[i]);
			monthly = m && *m == *months;
		}
		if (monthly) {
			return;
		}
	}
	throw Error(ErrorCode::InvalidSeries, "timestamps are not regularly spaced");
}

} // namespace

void set_warning_sink(WarningSink sink) {
	std::lock_guard lock(sink_mutex());
	sink_slot() = std::move(sink);
}

void warn(std::string_view message) {
	std::lock_guard lock(sink_mutex());
	if (sink_slot()) {
		sink_slot()(message);
	} else {
		std::cerr << "warning: " << message << '\n';
	}
}

std::string_view to_string(ColumnKind kind) {
	switch (kind) {
	case ColumnKind::numeric: return "numeric";
	case ColumnKind::categorical: return "categorical";
	case ColumnKind::boolean: return "boolean";
	}
	return "numeric";
}

TimeSeries::TimeSeries(std::string id, Vector target, std::optional<std::vector<Timestamp>> timestamps,
                       std::vector<ExoColumn> exogenous, std::optional<int> frequency_hint, std::string source)
    : id_(std::move(id)), target_(std::move(target)), timestamps_(std::move(timestamps)),
      exogenous_(std::move(exogenous)), frequency_hint_(frequency_hint), source_(std::move(source)) {
	if (target_.size() < 1) {
		throw Error(ErrorCode::InvalidSeries, "series '" + id_ + "' has no observations");
	}
	for (Index i = 0; i < target_.size(); ++i) {
		if (!std::isfinite(target_[i])) {
			throw Error(ErrorCode::InvalidSeries, "series '" + id_ + "' has a missing target at row " + std::to_string(i));
		}
	}
	for (const auto &col : exogenous_) {
		if (col.values.size() != target_.size()) {
			throw Error(ErrorCode::InvalidSeries, "exogenous column '" + col.name + "' is not aligned with the target");
		}
	}
	if (timestamps_) {
		if (static_cast<Index>(timestamps_->size()) != target_.size()) {
			throw Error(ErrorCode::InvalidSeries, "timestamps are not aligned with the target");
		}
		check_spacing(*timestamps_);
	}
	if (frequency_hint_ && *frequency_hint_ < 1) {
		throw Error(ErrorCode::InvalidSeries, "frequency hint must be positive");
	}
}

std::optional<std::chrono::seconds> TimeSeries::spacing() const {
	if (!timestamps_ || timestamps_->size() < 2) {
		return std::nullopt;
	}
	return std::chrono::duration_cast<std::chrono::seconds>((*timestamps_)[1] - (*timestamps_)[0]);
}

TimeSeries TimeSeries::slice(Index begin, Index end) const {
	if (begin < 0 || end > size() || begin >= end) {
		throw Error(ErrorCode::InvalidArgument, "invalid slice [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
	}
	TimeSeries out;
	out.id_ = id_;
	out.source_ = source_;
	out.frequency_hint_ = frequency_hint_;
	out.target_ = target_.segment(begin, end - begin);
	if (timestamps_) {
		out.timestamps_ = std::vector<Timestamp>(timestamps_->begin() + begin, timestamps_->begin() + end);
	}
	out.exogenous_.reserve(exogenous_.size());
	for (const auto &col : exogenous_) {
		out.exogenous_.push_back({col.name, col.kind, col.values.segment(begin, end - begin), col.levels});
	}
	return out;
}

Index SplitSpec::horizon_for(Index length) const {
	if (horizon) {
		return *horizon;
	}
	if (train_fraction) {
		if (!(*train_fraction > 0.0 && *train_fraction < 1.0)) {
			throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
		}
		auto train = static_cast<Index>(std::floor(*train_fraction * static_cast<double>(length) + 1e-9));
		return length - train;
	}
	throw Error(ErrorCode::InvalidArgument, "split spec needs a horizon or a train fraction");
}

TrainTest split(const TimeSeries &series, const SplitSpec &spec) {
	return split(series, spec.horizon_for(series.size()));
}

TrainTest split(const TimeSeries &series, Index horizon) {
	const Index n = series.size();
	if (horizon < 1) {
		throw Error(ErrorCode::InvalidArgument, "horizon must be at least 1");
	}
	if (horizon > n - 2) {
		throw Error(ErrorCode::SplitTooLarge, "horizon " + std::to_string(horizon) + " leaves fewer than 2 training points in a series of length " + std::to_string(n));
	}
	return {series.slice(0, n - horizon), series.slice(n - horizon, n)};
}

EnsembleTrainSplit ensemble_split(Index train_size, double valid_fraction, std::optional<int> period) {
	if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
		throw Error(ErrorCode::InvalidArgument, "valid_fraction must lie in (0, 1)");
	}
	auto valid = static_cast<Index>(std::ceil(valid_fraction * static_cast<double>(train_size) - 1e-9));
	if (period && *period >= 1) {
		valid = std::min<Index>(valid, std::max<Index>(2 * *period, 10));
	}
	if (valid < 1 || train_size - valid < 2) {
		throw Error(ErrorCode::SeriesTooShort, "training length " + std::to_string(train_size) + " cannot host an ensemble validation split");
	}
	return {train_size - valid, train_size};
}

std::optional<Index> ForecastMatrix::find(std::string_view id) const {
	for (std::size_t i = 0; i < model_ids.size(); ++i) {
		if (model_ids[i] == id) {
			return static_cast<Index>(i);
		}
	}
	return std::nullopt;
}

Eigen::RowVectorXd ForecastMatrix::row(std::string_view id) const {
	auto i = find(id);
	if (!i) {
		throw Error(ErrorCode::UnknownName, "model '" + std::string(id) + "' is not in the forecast matrix");
	}
	return values.row(*i);
}

ForecastMatrix ForecastMatrix::subset(const std::vector<Index> &rows) const {
	ForecastMatrix out;
	out.horizon_start = horizon_start;
	out.values.resize(static_cast<Index>(rows.size()), values.cols());
	for (std::size_t i = 0; i < rows.size(); ++i) {
		out.model_ids.push_back(model_ids.at(static_cast<std::size_t>(rows[i])));
		out.values.row(static_cast<Index>(i)) = values.row(rows[i]);
	}
	return out;
}

void ForecastMatrix::validate() const {
	if (static_cast<Index>(model_ids.size()) != values.rows()) {
		throw Error(ErrorCode::InvalidArgument, "forecast matrix ids and rows disagree");
	}
	if (!values.allFinite()) {
		throw Error(ErrorCode::InvalidArgument, "forecast matrix contains non-finite values");
	}
}

double Rng::uniform() {
	// 53 random bits -> [0, 1)
	return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
	if (spare_normal_) {
		double v = *spare_normal_;
		spare_normal_.reset();
		return v;
	}
	double u1 = 0.0;
	do {
		u1 = uniform();
	} while (u1 <= 0.0);
	const double u2 = uniform();
	const double r = std::sqrt(-2.0 * std::log(u1));
	const double theta = 2.0 * 3.14159265358979323846 * u2;
	spare_normal_ = r * std::sin(theta);
	return r * std::cos(theta);
}

Index Rng::uniform_index(Index n) {
	if (n <= 0) {
		throw Error(ErrorCode::InvalidArgument, "uniform_index needs n > 0");
	}
	const auto un = static_cast<std::uint64_t>(n);
	const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
	std::uint64_t x = 0;
	do {
		x = engine_();
	} while (x >= limit);
	return static_cast<Index>(x % un);
}

std::uint64_t splitmix64(std::uint64_t x) {
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
	std::uint64_t h = 0xcbf29ce484222325ULL;
	for (unsigned char c : tag) {
		h ^= c;
		h *= 0x100000001b3ULL;
	}
	return splitmix64(seed ^ splitmix64(h));
}

} // namespace tsens
