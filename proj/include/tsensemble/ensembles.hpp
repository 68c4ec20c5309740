#pragma once

#include "tsensemble/base_models.hpp"
#include "tsensemble/learners.hpp"

#include <functional>
#include <map>
#include <memory>

namespace tsens {

struct SelectionStrategy {
	enum class Kind { all, best, named };
	Kind kind = Kind::all;
	int num_best = 3;
	std::vector<std::string> names;

	static SelectionStrategy all() { return {}; }
	static SelectionStrategy best(int b = 3) { return {Kind::best, b, {}}; }
	static SelectionStrategy named(std::vector<std::string> n) { return {Kind::named, 3, std::move(n)}; }

	/// "all", "best" (b = 3), "best3", or a '+'-joined list of model names.
	std::string canonical() const;
	static SelectionStrategy parse(std::string_view text);
};

/// Row indices chosen from a pool with the given names and validation
/// errors. best: the b lowest errors, ties broken by name; named: exactly
/// the listed models, in list order.
std::vector<Index> select_models(const std::vector<std::string> &names, const Vector &errors,
                                 const SelectionStrategy &strategy);

struct WeightVector {
	std::vector<std::string> model_ids;
	Vector weights;

	/// Non-negative entries summing to 1 within tol.
	bool valid(double tol = 1e-9) const;
};

/// Weighted sum of the rows of `test` (rows matched by position).
Vector apply_weights(const WeightVector &w, const ForecastMatrix &test);

struct WeightedForecast {
	Vector forecast;
	WeightVector weights;
};

enum class DetweFormula { sqr, inv, exp };
std::string_view to_string(DetweFormula f);
DetweFormula parse_detwe_formula(std::string_view name);

inline constexpr double kWeightEpsilon = 1e-9;

/// inv: 1/(e+eps); sqr: 1/(e+eps)^2; exp: exp(-e/mean(e)), all normalised.
Vector detwe_weights(const Vector &errors, DetweFormula formula);
WeightedForecast combine_detwe(const Vector &errors, DetweFormula formula, const ForecastMatrix &test);

Vector mean_average(const ForecastMatrix &test);

/// Fixed combination such as "ets_theta". The three legacy names
/// ets_arima, ets_arima_tbats_theta and ets_arima_tbats are remapped to
/// ets_theta, ets_theta_snaive and ets_theta_stlmar with a notice.
std::vector<std::string> resolve_combo(std::string_view combo);
Vector algo_algo(std::string_view combo, const ForecastMatrix &test);

// --- Stacking -------------------------------------------------------------

inline constexpr int kDefaultFolds = 5;

/// Out-of-fold base predictions from expanding-window time-series folds:
/// fold i tests on [start_i, start_i + size) and trains on [0, start_i).
struct OofPredictions {
	std::vector<std::string> model_ids;
	/// One row per out-of-fold time point, one column per model.
	Matrix values;
	Vector actual;
	std::vector<int> fold;
	std::vector<Index> time;
	std::vector<Index> fold_start;
	Index fold_size = 0;
};

/// Fold layout for n points: test windows of n / (folds + 1) points each,
/// ending at n. Throws SeriesTooShort when a window would be empty or the
/// first training window would hold fewer than 2 points.
std::vector<std::pair<Index, Index>> time_series_folds(Index n, int folds);

/// Models failing on any fold are left out with a warning.
OofPredictions stacking_oof(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                            const SeasonalityInfo &seasonality, int folds = kDefaultFolds);

/// Meta-model fitted on OOF predictions, applied to the matching rows of the
/// test-horizon matrix.
Vector stack_with_oof(const OofPredictions &oof, const ForecastMatrix &test, MetaModelKind meta, std::uint64_t seed);

Vector ensemble_stacking(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                         const SeasonalityInfo &seasonality, const ForecastMatrix &test, MetaModelKind meta,
                         std::uint64_t seed, int folds = kDefaultFolds);

/// Meta-model fitted on (evalid predictions -> evalid actuals).
struct StackingBasic {
	Regressor meta;
	Vector forecast;
};
StackingBasic ensemble_stacking_basic(const ForecastMatrix &evalid, const Eigen::Ref<const Vector> &evalid_actual,
                                      const ForecastMatrix &test, MetaModelKind meta, std::uint64_t seed);

// --- Greedy selection -------------------------------------------------------

/// Error of a combined forecast against the actuals (smaller is better).
using ScoreFn = std::function<double(const Vector &actual, const Vector &forecast)>;
ScoreFn smape_score();
ScoreFn mse_score();
ScoreFn mae_score();

inline constexpr int kForwardMaxIter = 20;

struct ForwardSelection {
	WeightVector weights;
	std::vector<int> counts;
	/// Ensemble error after the initial pick and after every accepted addition.
	std::vector<double> trace;
};

/// Starts from the single best model and repeatedly adds (with repetition)
/// the candidate giving the lowest error of the count-weighted mean, while
/// that strictly improves, for at most max_iter additions. Ties go to the
/// lower row. sort = true restricts additions to the ceil(M/2) models with
/// the lowest individual error.
ForwardSelection ensemble_model_selection(const Matrix &evalid, const Vector &actual, bool sort,
                                          int max_iter = kForwardMaxIter, const ScoreFn &score = smape_score(),
                                          const std::vector<std::string> &ids = {});

struct BagSelection {
	int period = 0;
	std::vector<WeightVector> bag_weights;
	std::vector<bool> fallback;
	Vector forecast;
};

/// Bag i holds the evalid points at absolute times t with t mod m == i.
/// Test step k (absolute time test_start + k) uses its own bag's weights.
BagSelection ensemble_selection_bags(const ForecastMatrix &evalid, const Eigen::Ref<const Vector> &actual,
                                     const ForecastMatrix &test, int period, const ScoreFn &score);

struct BackwardElimination {
	std::vector<Index> survivors;
	std::vector<double> trace;
};

/// Drops the member with the highest individual evalid error while the
/// equal-weight evalid error strictly decreases.
BackwardElimination backward_eliminate(const Matrix &evalid, const Vector &actual, const Vector &member_errors);

// --- FFORMA ----------------------------------------------------------------

inline constexpr Index kFformaMinCorpus = 50;
/// Per-series errors are capped before training so undefined ones (scored
/// with kUndefinedErrorPenalty) do not dominate the corpus mean.
inline constexpr double kFformaErrorCap = 1000.0;

struct FformaModel {
	std::vector<std::string> model_ids;
	std::vector<std::string> feature_names;
	double error_scale = 1.0;
	Booster booster;

	Eigen::RowVectorXd weights(const Eigen::Ref<const Eigen::RowVectorXd> &features) const;
};

/// Errors: one row per series, one column per pool member. They are divided
/// by the corpus mean before training.
FformaModel fforma_train(const Matrix &features, const Matrix &errors, std::vector<std::string> model_ids,
                         std::vector<std::string> feature_names, const GbtParams &params = {});
WeightedForecast fforma_apply(const FformaModel &model, const Eigen::Ref<const Eigen::RowVectorXd> &features,
                              const ForecastMatrix &test);

nlohmann::json to_json(const FformaModel &m);
FformaModel fforma_from_json(const nlohmann::json &j);

// --- Recent ensemble -------------------------------------------------------

struct RecentConfig {
	int p = 20;
	int lambda_pct = 50;
};

inline constexpr double kSapeFallback = 200.0;

/// ceil(lambda% * M) computed exactly, at least 1.
Index recent_keep_count(int lambda_pct, Index pool_size);

struct RecentEnsemble {
	Vector recent_error;
	WeightedForecast result;
};

/// Members are refit on the first n - P points and scored by mean sAPE over
/// the last P; the best ceil(lambda% M) are weighted by 1/(score + eps).
RecentEnsemble recent_ensemble(const std::vector<BaseModel> &pool, const Eigen::Ref<const Vector> &train,
                               const SeasonalityInfo &seasonality, const RecentConfig &config, const ForecastMatrix &test);

// --- Superbooster ------------------------------------------------------------

inline constexpr double kNoiseAlpha = 0.1;

struct SuperboosterAugmentation {
	double alpha = kNoiseAlpha;
	Index l = 0;
	Index v = 0;
	double delta_y = 0.0;
	Vector y_noisy;
	Vector y_extended;
};

/// delta_y = mean |yhat_evalid - y_evalid|; y_noisy = y_etrain + alpha * r
/// with r ~ N(0, delta_y) read as a variance, i.e. sd sqrt(delta_y).
SuperboosterAugmentation augment_targets(const Eigen::Ref<const Vector> &y_etrain, const Eigen::Ref<const Vector> &y_evalid,
                                         const Eigen::Ref<const Vector> &yhat_evalid, bool noise, Rng &rng,
                                         double alpha = kNoiseAlpha);

/// Everything known about the time axis of one training series and its
/// horizon: exogenous values for train and test steps, calendar columns and
/// Fourier terms. Rows cover [0, n + h).
struct ExogenousFrame {
	std::vector<std::string> names;
	Matrix values;
};

struct SuperboosterInput {
	/// Row index of the base model inside the pool.
	Index base = 0;
	const PoolFit *pool = nullptr;
	const Vector *train = nullptr;
	/// Optional; rows for [0, n + h).
	const ExogenousFrame *exogenous = nullptr;
	bool noise = false;
	MetaModelKind meta = MetaModelKind::gbt;
	std::uint64_t seed = 0;
};

struct SuperboosterResult {
	Vector forecast;
	SuperboosterAugmentation augmentation;
	Index rows = 0;
};

SuperboosterResult superbooster(const SuperboosterInput &input);

// --- Specs -------------------------------------------------------------------

enum class EnsembleMethod {
	combine_detwe,
	ensemble_stacking,
	ensemble_stacking_basic,
	ensemble_model_selection,
	ensemble_selection_bags,
	ensemble_backward_elimination,
	fforma,
	recent_ensemble,
	superbooster,
	mean_average,
	algo_algo,
};
std::string_view to_string(EnsembleMethod m);
EnsembleMethod parse_method(std::string_view name);

/// method + hyperparameters + selection. Canonical form:
/// method(k=v,...)|sel=<selection>, keys sorted, "()" omitted when empty.
struct EnsembleSpec {
	EnsembleMethod method = EnsembleMethod::mean_average;
	std::map<std::string, std::string> params;
	SelectionStrategy selection;

	std::string canonical() const;
	const std::string &param(const std::string &key) const;
};

/// Parses and validates a canonical (or alias-using) spec string; the
/// result is normalised, e.g. lgbm becomes gbt.
EnsembleSpec parse_spec(std::string_view text);

/// Every combination of the hyperparameter grids and selection strategies.
std::vector<EnsembleSpec> default_grid();

/// What one series offers to the ensembles. Lazily computed pieces are
/// cached so specs sharing them (stacking folds, recent refits) pay once.
class EnsembleContext {
public:
	EnsembleContext(const std::vector<BaseModel> &pool, Vector train, PoolFit fit, const ExogenousFrame *exogenous,
	                std::uint64_t seed);

	const std::vector<BaseModel> &pool() const { return pool_; }
	const Vector &train() const { return train_; }
	const PoolFit &fit() const { return fit_; }
	const ExogenousFrame *exogenous() const { return exogenous_; }
	Vector evalid_actual() const;
	std::uint64_t seed() const { return seed_; }

	/// FFORMA support: a corpus model and this series' feature row.
	void set_fforma(const FformaModel *model, Eigen::RowVectorXd features);

	std::vector<BaseModel> models_at(const std::vector<Index> &rows) const;
	const OofPredictions &oof(const std::vector<Index> &rows);
	const RecentEnsemble &recent(const RecentConfig &config);

	const FformaModel *fforma_model() const { return fforma_; }
	const Eigen::RowVectorXd &fforma_features() const { return fforma_features_; }

private:
	std::vector<BaseModel> pool_;
	Vector train_;
	PoolFit fit_;
	const ExogenousFrame *exogenous_ = nullptr;
	std::uint64_t seed_ = 0;
	const FformaModel *fforma_ = nullptr;
	Eigen::RowVectorXd fforma_features_;
	std::map<std::vector<Index>, std::unique_ptr<OofPredictions>> oof_cache_;
	std::map<std::pair<int, int>, std::unique_ptr<RecentEnsemble>> recent_cache_;
};

struct EnsembleOutput {
	Vector forecast;
	std::optional<WeightVector> weights;
};

/// Runs one spec against the context; the per-spec seed is derived from the
/// context seed and the canonical string.
EnsembleOutput run_ensemble(const EnsembleSpec &spec, EnsembleContext &context);

} // namespace tsens
