#pragma once

#include "tsensemble/core.hpp"
#include "tsensemble/preprocess.hpp"

#include <iosfwd>
#include <map>

namespace tsens {

/// Bumped whenever a feature is added, removed or redefined.
inline constexpr std::string_view kFeatureSetVersion = "tsf-1";

struct MetaFeatureVector {
	std::vector<std::string> names;
	Eigen::RowVectorXd values;

	double operator[](std::string_view name) const;
	/// Concatenation; names must not collide.
	MetaFeatureVector joined(const MetaFeatureVector &other) const;
};

/// The 20 series features followed by the seasonal_defined and
/// variance_defined flags. Undefined features are 0 with the flag at 0.
const std::vector<std::string> &series_feature_names();
const std::vector<std::string> &general_feature_names();
/// series_feature_names() then general_feature_names().
const std::vector<std::string> &all_feature_names();

/// Needs at least 8 points. Scale-free features are computed on the
/// standardised series; cv and length are not scale free by design.
MetaFeatureVector extract_series_features(const Eigen::Ref<const Vector> &y, const SeasonalityInfo &seasonality);

/// Counts over exogenous columns: nr_cat, nr_bin, nr_num, nr_attr,
/// inst_to_attr = T / max(nr_attr, 1), num_to_cat = nr_num / max(nr_cat, 1).
MetaFeatureVector extract_general_features(const TimeSeries &series);

MetaFeatureVector extract_features(const TimeSeries &series, const SeasonalityInfo &seasonality);

// Building blocks, exposed for tests.
Vector autocorrelations(const Eigen::Ref<const Vector> &y, int max_lag);
Vector partial_autocorrelations(const Eigen::Ref<const Vector> &y, int max_lag);
/// Normalised Shannon entropy in [0, 1] of the Daniell-smoothed periodogram.
double spectral_entropy(const Eigen::Ref<const Vector> &y);

/// One row per dataset, under a "# feature_set=<version>" comment line.
void write_feature_csv(std::ostream &out, const std::map<std::string, MetaFeatureVector> &rows);
std::map<std::string, MetaFeatureVector> read_feature_csv(std::istream &in);

} // namespace tsens
