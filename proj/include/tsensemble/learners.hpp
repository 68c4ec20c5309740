#pragma once

#include "tsensemble/core.hpp"

#include <json.hpp>

#include <memory>
#include <variant>

namespace tsens {

/// Ridge-conditioned least squares with an unpenalised intercept.
struct LinearModel {
	double intercept = 0.0;
	Vector coef;

	Vector predict(const Matrix &x) const;
	double predict_row(const Eigen::Ref<const Eigen::RowVectorXd> &row) const;
};

inline constexpr double kRidgeLambda = 1e-6;

LinearModel fit_linreg(const Matrix &x, const Vector &y, double lambda = kRidgeLambda);

enum class TreeTask { regression, classification };

struct TreeParams {
	TreeTask task = TreeTask::regression;
	int max_depth = 6;
	Index min_leaf = 1;
	/// Features tried per split; 0 means all.
	Index max_features = 0;
};

/// Flat binary tree. Leaves carry the mean target (regression) or the
/// fraction of positive labels (binary classification).
struct Tree {
	struct Node {
		int feature = -1;
		double threshold = 0.0;
		int left = -1;
		int right = -1;
		double value = 0.0;
	};
	std::vector<Node> nodes;

	double predict_row(const Eigen::Ref<const Eigen::RowVectorXd> &row) const;
	Vector predict(const Matrix &x) const;
	int depth() const;
	/// Adds one to counts[f] for every split on feature f.
	void count_usage(std::vector<int> &counts) const;
};

/// CART with variance (regression) or Gini (classification) impurity.
/// `rows` restricts training to a sample (with repetitions); `rng` is only
/// consulted when max_features is below the column count.
Tree fit_tree(const Matrix &x, const Vector &y, const TreeParams &params, const std::vector<Index> *rows = nullptr,
              Rng *rng = nullptr);

std::vector<Index> bootstrap_sample(Index n, Rng &rng);

struct ForestParams {
	int n_trees = 100;
	TreeParams tree{TreeTask::regression, 12, 1, -1};
	bool bootstrap = true;
};

/// Feature count used when ForestParams::tree.max_features is negative.
Index sqrt_features(Index p);

/// Tree t is grown from Rng(derive_seed(seed, "tree" + t)): first the
/// bootstrap draw, then per-split feature subsets.
struct Forest {
	TreeTask task = TreeTask::regression;
	std::vector<Tree> trees;
	std::vector<int> feature_usage;

	/// Mean of the tree outputs: a regression value, or the class-1
	/// probability under soft voting.
	Vector predict(const Matrix &x) const;
	double predict_row(const Eigen::Ref<const Eigen::RowVectorXd> &row) const;
	std::vector<int> predict_class(const Matrix &x) const;
};

Forest fit_rf(const Matrix &x, const Vector &y, const ForestParams &params, std::uint64_t seed);

/// Loss with per-sample gradient and diagonal hessian over raw scores
/// (rows x dims).
class Objective {
public:
	virtual ~Objective() = default;
	virtual Index dims() const = 0;
	virtual Index rows() const = 0;
	virtual double loss(const Matrix &scores) const = 0;
	virtual void gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const = 0;
	/// Starting raw score per dimension.
	virtual Eigen::RowVectorXd base_score() const = 0;
};

class SquaredObjective final : public Objective {
public:
	explicit SquaredObjective(Vector y) : y_(std::move(y)) {}
	Index dims() const override { return 1; }
	Index rows() const override { return y_.size(); }
	double loss(const Matrix &scores) const override;
	void gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const override;
	Eigen::RowVectorXd base_score() const override;

private:
	Vector y_;
};

/// Binary log-loss on labels in {0, 1}.
class LogisticObjective final : public Objective {
public:
	explicit LogisticObjective(Vector labels) : y_(std::move(labels)) {}
	Index dims() const override { return 1; }
	Index rows() const override { return y_.size(); }
	double loss(const Matrix &scores) const override;
	void gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const override;
	Eigen::RowVectorXd base_score() const override;

private:
	Vector y_;
};

/// Mean over rows of sum_m softmax(s)_m * e_m, for a rows x M error matrix.
class SoftmaxWeightedError final : public Objective {
public:
	explicit SoftmaxWeightedError(Matrix errors) : e_(std::move(errors)) {}
	Index dims() const override { return e_.cols(); }
	Index rows() const override { return e_.rows(); }
	double loss(const Matrix &scores) const override;
	void gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const override;
	Eigen::RowVectorXd base_score() const override;
	/// Loss of a single row, for finite-difference checks.
	double row_loss(const Eigen::Ref<const Eigen::RowVectorXd> &scores, Index row) const;

private:
	Matrix e_;
};

Eigen::RowVectorXd softmax(const Eigen::Ref<const Eigen::RowVectorXd> &scores);

inline constexpr double kHessianFloor = 1e-6;

struct GbtParams {
	int n_rounds = 200;
	double learning_rate = 0.1;
	int max_depth = 3;
	double lambda = 1.0;
	Index min_leaf = 5;
};

/// Newton boosting: per round and dimension one tree on (g, h) with leaf
/// value -G / (H + lambda), shrunk by the learning rate. A round whose step
/// would raise the training loss is halved until it does not (and dropped
/// after a few halvings), so the loss trace never increases.
struct Booster {
	Eigen::RowVectorXd base;
	/// trees[round * dims + d]
	std::vector<Tree> trees;
	std::vector<double> shrink;
	Index dims = 1;
	std::vector<double> loss_trace;

	Matrix raw_scores(const Matrix &x) const;
	/// First score column; the regression output for a squared objective.
	Vector predict(const Matrix &x) const;
};

Booster fit_gbt(const Matrix &x, const Objective &objective, const GbtParams &params = {});

/// The regressor slot of stacking, backward elimination and superbooster.
enum class MetaModelKind { linreg, rf, gbt };
std::string_view to_string(MetaModelKind kind);
/// Accepts linreg, rf, gbt and the aliases lgbm / xgboost (both gbt).
MetaModelKind parse_meta_model(std::string_view name);

struct Regressor {
	MetaModelKind kind = MetaModelKind::linreg;
	std::variant<LinearModel, Forest, Booster> model;

	Vector predict(const Matrix &x) const;
};

Regressor fit_regressor(MetaModelKind kind, const Matrix &x, const Vector &y, std::uint64_t seed);

nlohmann::json to_json(const LinearModel &m);
nlohmann::json to_json(const Tree &t);
nlohmann::json to_json(const Forest &f);
nlohmann::json to_json(const Booster &b);
LinearModel linear_from_json(const nlohmann::json &j);
Tree tree_from_json(const nlohmann::json &j);
Forest forest_from_json(const nlohmann::json &j);
Booster booster_from_json(const nlohmann::json &j);

} // namespace tsens
