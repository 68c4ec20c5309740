#include "tsensemble/meta_features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <ostream>
#include <sstream>

namespace tsens {

double MetaFeatureVector::operator[](std::string_view name) const {
	for (std::size_t i = 0; i < names.size(); ++i) {
		if (names[i] == name) {
			return values[static_cast<Index>(i)];
		}
	}
	throw Error(ErrorCode::UnknownName, "no feature named '" + std::string(name) + "'");
}

MetaFeatureVector MetaFeatureVector::joined(const MetaFeatureVector &other) const {
	MetaFeatureVector out;
	out.names = names;
	for (const auto &n : other.names) {
		if (std::find(names.begin(), names.end(), n) != names.end()) {
			throw Error(ErrorCode::InvalidArgument, "duplicate feature '" + n + "'");
		}
		out.names.push_back(n);
	}
	out.values.resize(values.size() + other.values.size());
	out.values << values, other.values;
	return out;
}

const std::vector<std::string> &series_feature_names() {
	static const std::vector<std::string> names{
	    "length",         "seasonal_period",   "trend_strength",     "seasonal_strength",  "spectral_entropy",
	    "acf1",           "acf10_sumsq",       "pacf5_sumsq",        "diff1_acf1",         "stability",
	    "lumpiness",      "crossing_points_rate", "flat_spots_rate", "linearity",          "curvature",
	    "residual_acf1",  "entropy_of_diff",   "nonlinearity_proxy", "hurst_proxy",        "cv",
	    "seasonal_defined", "variance_defined"};
	return names;
}

const std::vector<std::string> &general_feature_names() {
	static const std::vector<std::string> names{"nr_cat", "nr_bin", "nr_num", "nr_attr", "inst_to_attr", "num_to_cat"};
	return names;
}

const std::vector<std::string> &all_feature_names() {
	static const std::vector<std::string> names = [] {
		auto n = series_feature_names();
		for (const auto &g : general_feature_names()) n.push_back(g);
		return n;
	}();
	return names;
}

Vector autocorrelations(const Eigen::Ref<const Vector> &y, int max_lag) {
	const Index n = y.size();
	const Vector c = y.array() - y.mean();
	const double denom = c.squaredNorm();
	Vector out = Vector::Zero(max_lag);
	if (denom <= 0.0) {
		return out;
	}
	for (int k = 1; k <= max_lag && k < n; ++k) {
		out[k - 1] = c.head(n - k).dot(c.tail(n - k)) / denom;
	}
	return out;
}

Vector partial_autocorrelations(const Eigen::Ref<const Vector> &y, int max_lag) {
	const Vector r = autocorrelations(y, max_lag);
	Vector pacf = Vector::Zero(max_lag);
	// Durbin-Levinson recursion.
	Vector phi = Vector::Zero(max_lag + 1);
	Vector prev = phi;
	double v = 1.0;
	for (int k = 1; k <= max_lag; ++k) {
		double num = r[k - 1];
		for (int j = 1; j < k; ++j) num -= prev[j] * r[k - j - 1];
		if (v <= 1e-12) {
			break;
		}
		const double a = num / v;
		phi[k] = a;
		for (int j = 1; j < k; ++j) phi[j] = prev[j] - a * prev[k - j];
		v *= (1.0 - a * a);
		pacf[k - 1] = a;
		prev = phi;
	}
	return pacf;
}

double spectral_entropy(const Eigen::Ref<const Vector> &y) {
	const Index n = y.size();
	const Index half = n / 2;
	if (half < 2) {
		return 0.0;
	}
	std::vector<double> in(static_cast<std::size_t>(n));
	const double mean = y.mean();
	for (Index i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = y[i] - mean;
	std::vector<std::complex<double>> out;
	Eigen::FFT<double> fft;
	fft.fwd(out, in);
	Vector raw(half);
	for (Index j = 1; j <= half; ++j) raw[j - 1] = std::norm(out[static_cast<std::size_t>(j)]) / static_cast<double>(n);
	const int w = static_cast<int>(std::floor(std::log2(static_cast<double>(half))));
	Vector s(half);
	for (Index j = 0; j < half; ++j) {
		const Index lo = std::max<Index>(0, j - w);
		const Index hi = std::min<Index>(half - 1, j + w);
		s[j] = raw.segment(lo, hi - lo + 1).mean();
	}
	const double total = s.sum();
	if (!(total > 0.0)) {
		return 0.0;
	}
	double h = 0.0;
	for (Index j = 0; j < half; ++j) {
		const double p = s[j] / total;
		if (p > 0.0) h -= p * std::log(p);
	}
	return std::clamp(h / std::log(static_cast<double>(half)), 0.0, 1.0);
}

namespace {

double variance(const Vector &v) {
	if (v.size() < 2) return 0.0;
	return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

double histogram_entropy(const Vector &v, int bins) {
	if (v.size() < 2) return 0.0;
	const double lo = v.minCoeff();
	const double hi = v.maxCoeff();
	if (!(hi > lo)) return 0.0;
	std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
	for (Index i = 0; i < v.size(); ++i) {
		const int b = std::min(bins - 1, static_cast<int>((v[i] - lo) / (hi - lo) * bins));
		counts[static_cast<std::size_t>(b)] += 1.0;
	}
	double h = 0.0;
	for (double c : counts) {
		if (c > 0.0) {
			const double p = c / static_cast<double>(v.size());
			h -= p * std::log(p);
		}
	}
	return h / std::log(static_cast<double>(bins));
}

} // namespace

MetaFeatureVector extract_series_features(const Eigen::Ref<const Vector> &y, const SeasonalityInfo &seasonality) {
	const Index n = y.size();
	if (n < 8) {
		throw Error(ErrorCode::SeriesTooShort, "feature extraction needs at least 8 points, got " + std::to_string(n));
	}
	const int m = seasonality.period_or_one();
	const bool seasonal = m >= 2 && n >= 2 * m;
	const double mean = y.mean();
	const double sd = std::sqrt((y.array() - mean).square().mean());
	const bool var_defined = sd > 1e-12 * (std::abs(mean) + 1.0);
	const Vector z = var_defined ? ((y.array() - mean) / sd).matrix() : Vector::Zero(n).eval();

	MetaFeatureVector f;
	f.names = series_feature_names();
	f.values = Eigen::RowVectorXd::Zero(static_cast<Index>(f.names.size()));
	auto set = [&](std::string_view name, double v) {
		const auto it = std::find(f.names.begin(), f.names.end(), name);
		f.values[it - f.names.begin()] = std::isfinite(v) ? v : 0.0;
	};
	set("length", static_cast<double>(n));
	set("seasonal_period", static_cast<double>(m));
	set("seasonal_defined", seasonal ? 1.0 : 0.0);
	set("variance_defined", var_defined ? 1.0 : 0.0);
	if (var_defined) {
		set("cv", std::abs(mean) > 0.0 ? sd / std::abs(mean) : 0.0);
	}

	// Decomposition: moving-average trend, period-wise seasonal means, remainder.
	const int window = seasonal ? m : std::max(3, static_cast<int>(n / 10) | 1);
	const Vector trend = centered_moving_average(z, window);
	Vector season = Vector::Zero(n);
	if (seasonal) {
		const Vector idx = seasonal_indices(z, m, SeasonalMode::additive);
		for (Index t = 0; t < n; ++t) season[t] = idx[t % m];
	}
	std::vector<double> tr;
	std::vector<double> se;
	std::vector<double> re;
	for (Index t = 0; t < n; ++t) {
		if (std::isfinite(trend[t])) {
			tr.push_back(trend[t]);
			se.push_back(season[t]);
			re.push_back(z[t] - trend[t] - season[t]);
		}
	}
	const auto cnt = static_cast<Index>(re.size());
	const Eigen::Map<Vector> T(tr.data(), cnt);
	const Eigen::Map<Vector> S(se.data(), cnt);
	const Eigen::Map<Vector> R(re.data(), cnt);
	if (var_defined && cnt >= 3) {
		const double vr = variance(R);
		const double vtr = variance(T + R);
		const double vsr = variance(S + R);
		set("trend_strength", vtr > 0.0 ? std::clamp(1.0 - vr / vtr, 0.0, 1.0) : 0.0);
		if (seasonal) set("seasonal_strength", vsr > 0.0 ? std::clamp(1.0 - vr / vsr, 0.0, 1.0) : 0.0);
		// z has unit variance, so a remainder this small is rounding noise (n = 2m
		// leaves one observation per seasonal index).
		if (vr > 1e-18) set("residual_acf1", autocorrelations(R, 1)[0]);
	}
	if (!var_defined) {
		return f;
	}

	set("spectral_entropy", spectral_entropy(z));
	const Vector acf = autocorrelations(z, 10);
	set("acf1", acf[0]);
	set("acf10_sumsq", acf.squaredNorm());
	set("pacf5_sumsq", partial_autocorrelations(z, 5).squaredNorm());
	const Vector dz = z.tail(n - 1) - z.head(n - 1);
	set("diff1_acf1", autocorrelations(dz, 1)[0]);
	set("entropy_of_diff", histogram_entropy(dz, 10));

	// Tiled means and variances.
	const Index width = seasonal ? m : 10;
	std::vector<double> means;
	std::vector<double> vars;
	for (Index s = 0; s + width <= n; s += width) {
		const Vector tile = z.segment(s, width);
		means.push_back(tile.mean());
		vars.push_back(variance(tile));
	}
	set("stability", variance(Eigen::Map<Vector>(means.data(), static_cast<Index>(means.size()))));
	set("lumpiness", variance(Eigen::Map<Vector>(vars.data(), static_cast<Index>(vars.size()))));

	std::vector<double> sorted(z.data(), z.data() + n);
	std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
	const double median = sorted[static_cast<std::size_t>(n / 2)];
	Index crossings = 0;
	for (Index t = 0; t + 1 < n; ++t) {
		if ((z[t] <= median) != (z[t + 1] <= median)) ++crossings;
	}
	set("crossing_points_rate", static_cast<double>(crossings) / static_cast<double>(n - 1));

	{
		const double lo = z.minCoeff();
		const double hi = z.maxCoeff();
		Index best = 1;
		Index run = 1;
		auto bin = [&](double v) { return std::min(9, static_cast<int>((v - lo) / (hi - lo) * 10.0)); };
		for (Index t = 1; t < n; ++t) {
			run = bin(z[t]) == bin(z[t - 1]) ? run + 1 : 1;
			best = std::max(best, run);
		}
		set("flat_spots_rate", static_cast<double>(best) / static_cast<double>(n));
	}

	{
		// Orthonormal polynomial basis of degree 2 on t.
		Matrix basis(n, 3);
		for (Index t = 0; t < n; ++t) {
			const double u = static_cast<double>(t);
			basis(t, 0) = 1.0;
			basis(t, 1) = u;
			basis(t, 2) = u * u;
		}
		Eigen::HouseholderQR<Matrix> qr(basis);
		const Matrix q = qr.householderQ() * Matrix::Identity(n, 3);
		// Fix column signs so that the basis is increasing / convex.
		Vector lin = q.col(1);
		Vector quad = q.col(2);
		if (lin[n - 1] < lin[0]) lin = -lin;
		if (quad[0] + quad[n - 1] < 2.0 * quad[n / 2]) quad = -quad;
		set("linearity", lin.dot(z));
		set("curvature", quad.dot(z));
	}

	{
		const Index rows = n - 1;
		Matrix x1(rows, 1);
		Matrix x3(rows, 3);
		Vector target(rows);
		for (Index t = 1; t < n; ++t) {
			const double l = z[t - 1];
			x1(t - 1, 0) = l;
			x3(t - 1, 0) = l;
			x3(t - 1, 1) = l * l;
			x3(t - 1, 2) = l * l * l;
			target[t - 1] = z[t];
		}
		auto sse = [&](const Matrix &x) {
			Matrix d(rows, x.cols() + 1);
			d << Vector::Ones(rows), x;
			const Vector beta = d.colPivHouseholderQr().solve(target);
			return (target - d * beta).squaredNorm();
		};
		const double s0 = sse(x1);
		const double s1 = sse(x3);
		set("nonlinearity_proxy", s0 > 1e-12 ? std::clamp((s0 - s1) / s0, 0.0, 1.0) : 0.0);
	}

	{
		double cum = 0.0;
		double lo = 0.0;
		double hi = 0.0;
		for (Index t = 0; t < n; ++t) {
			cum += z[t];
			lo = std::min(lo, cum);
			hi = std::max(hi, cum);
		}
		const double rs = hi - lo;
		set("hurst_proxy", rs > 0.0 ? std::log(rs) / std::log(static_cast<double>(n)) : 0.0);
	}
	return f;
}

MetaFeatureVector extract_general_features(const TimeSeries &series) {
	double cat = 0.0;
	double bin = 0.0;
	double num = 0.0;
	for (const auto &c : series.exogenous()) {
		switch (c.kind) {
		case ColumnKind::categorical: cat += 1.0; break;
		case ColumnKind::boolean: bin += 1.0; break;
		case ColumnKind::numeric: num += 1.0; break;
		}
	}
	const double attr = cat + bin + num;
	MetaFeatureVector f;
	f.names = general_feature_names();
	f.values.resize(6);
	f.values << cat, bin, num, attr, static_cast<double>(series.size()) / std::max(attr, 1.0), num / std::max(cat, 1.0);
	return f;
}

MetaFeatureVector extract_features(const TimeSeries &series, const SeasonalityInfo &seasonality) {
	return extract_series_features(series.target(), seasonality).joined(extract_general_features(series));
}

void write_feature_csv(std::ostream &out, const std::map<std::string, MetaFeatureVector> &rows) {
	out << "# feature_set=" << kFeatureSetVersion << '\n';
	out << "dataset_id";
	const auto &names = rows.empty() ? all_feature_names() : rows.begin()->second.names;
	for (const auto &n : names) out << ',' << n;
	out << '\n';
	char buf[64];
	for (const auto &[id, f] : rows) {
		if (f.names != names) {
			throw Error(ErrorCode::FeatureVersionMismatch, "feature rows disagree in their columns");
		}
		out << id;
		for (Index i = 0; i < f.values.size(); ++i) {
			std::snprintf(buf, sizeof buf, "%.17g", f.values[i]);
			out << ',' << buf;
		}
		out << '\n';
	}
}

std::map<std::string, MetaFeatureVector> read_feature_csv(std::istream &in) {
	std::string line;
	if (!std::getline(in, line) || line != "# feature_set=" + std::string(kFeatureSetVersion)) {
		throw Error(ErrorCode::FeatureVersionMismatch, "feature file was written by a different feature set (expected " + std::string(kFeatureSetVersion) + ")");
	}
	if (!std::getline(in, line)) {
		throw Error(ErrorCode::SchemaError, "feature file lacks a header");
	}
	std::vector<std::string> header;
	{
		std::stringstream ss(line);
		std::string cell;
		while (std::getline(ss, cell, ',')) header.push_back(cell);
	}
	if (header.empty() || header.front() != "dataset_id") {
		throw Error(ErrorCode::SchemaError, "feature file header must start with dataset_id");
	}
	std::vector<std::string> names(header.begin() + 1, header.end());
	std::map<std::string, MetaFeatureVector> out;
	while (std::getline(in, line)) {
		if (line.empty()) continue;
		std::stringstream ss(line);
		std::string id;
		std::getline(ss, id, ',');
		MetaFeatureVector f;
		f.names = names;
		f.values.resize(static_cast<Index>(names.size()));
		std::string cell;
		for (Index i = 0; i < f.values.size(); ++i) {
			if (!std::getline(ss, cell, ',')) {
				throw Error(ErrorCode::SchemaError, "feature row for " + id + " is too short");
			}
			f.values[i] = std::stod(cell);
		}
		out.emplace(id, std::move(f));
	}
	return out;
}

} // namespace tsens
