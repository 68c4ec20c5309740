#pragma once

#include "tsensemble/core.hpp"
#include "tsensemble/preprocess.hpp"

#include <map>
#include <string>
#include <vector>

namespace tsens {

enum class BaseModel { naive, snaive, rwdrift, theta, ets, stlmar, meanf };

std::string_view to_string(BaseModel model);
std::optional<BaseModel> parse_base_model(std::string_view name);
const std::vector<BaseModel> &all_base_models();

// Point forecasts. `period` is the seasonal period, 1 meaning none.
Vector forecast_naive(const Eigen::Ref<const Vector> &train, Index h);
Vector forecast_snaive(const Eigen::Ref<const Vector> &train, Index h, int period);
Vector forecast_rwdrift(const Eigen::Ref<const Vector> &train, Index h);
Vector forecast_theta(const Eigen::Ref<const Vector> &train, Index h, int period = 1);
Vector forecast_ets(const Eigen::Ref<const Vector> &train, Index h, int period = 1);
Vector forecast_stlmar(const Eigen::Ref<const Vector> &train, Index h, int period);
Vector forecast_meanf(const Eigen::Ref<const Vector> &train, Index h);

/// A fitted base model: h-step forecast, one-step in-sample fitted values
/// (NaN for the first `warmup` points) and its parameters.
struct ModelFit {
	BaseModel model = BaseModel::naive;
	std::string variant;
	Vector forecast;
	Vector fitted;
	Index warmup = 0;
	std::map<std::string, double> state;

	/// y - fitted after the warmup.
	Vector in_sample_errors(const Eigen::Ref<const Vector> &train) const;
};

ModelFit fit_base_model(BaseModel model, const Eigen::Ref<const Vector> &train, Index h, const SeasonalityInfo &seasonality);

enum class EtsKind { ses, holt, damped, hw_additive, hw_multiplicative };
std::string_view to_string(EtsKind kind);

struct EtsFit {
	EtsKind kind = EtsKind::ses;
	double alpha = 0.0;
	double beta = 0.0;
	double gamma = 0.0;
	double phi = 1.0;
	int period = 1;
	int n_params = 0;
	/// SSE and AICc proxy over the shared scoring window.
	double sse = 0.0;
	double aicc = 0.0;
	Vector fitted;
	Vector forecast;
};

/// Candidates admissible for this series: seasonal ones need period >= 2 and
/// n >= 2 * period, the multiplicative one additionally strictly positive data.
std::vector<EtsKind> ets_candidates(const Eigen::Ref<const Vector> &y, int period);

/// Fits one candidate with coordinate grid search (step 0.05) on one-step
/// SSE, scoring from index `score_from`.
EtsFit fit_ets_candidate(EtsKind kind, const Eigen::Ref<const Vector> &y, Index h, int period, Index score_from);

/// Lowest AICc proxy n ln(SSE/n) + 2pn/(n-p-1) over the admissible candidates.
EtsFit fit_ets(const Eigen::Ref<const Vector> &y, Index h, int period = 1);

/// One-step in-sample errors and the evalid sMAPE of one pool member.
struct FitReport {
	std::string model;
	Vector in_sample_errors;
	double training_error = 0.0;
};

inline constexpr double kUndefinedErrorPenalty = 1e9;

/// Result of fitting the pool on etrain (predicting evalid) and on the full
/// training data (predicting the test horizon). Models that fail are listed in
/// `dropped` and absent everywhere else.
struct PoolFit {
	ForecastMatrix evalid;
	ForecastMatrix test;
	std::vector<FitReport> reports;
	std::vector<ModelFit> etrain_fits;
	std::vector<ModelFit> train_fits;
	std::vector<std::string> dropped;
	EnsembleTrainSplit split;
	SeasonalityInfo seasonality;

	Index size() const noexcept { return evalid.models(); }
	std::vector<std::string> names() const { return evalid.model_ids; }
	/// Validation errors in pool order.
	Vector training_errors() const;
};

PoolFit fit_all(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                const EnsembleTrainSplit &split, const SeasonalityInfo &seasonality, Index h);

/// JSON state file with parameters and forecasts for every fitted member.
std::string serialize_pool(const PoolFit &pool);
PoolFit deserialize_pool(std::string_view json);

} // namespace tsens
