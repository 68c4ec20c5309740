#include "tsensemble/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsens {

Vector LinearModel::predict(const Matrix &x) const {
	return (x * coef).array() + intercept;
}

double LinearModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd> &row) const {
	return intercept + row.dot(coef);
}

LinearModel fit_linreg(const Matrix &x, const Vector &y, double lambda) {
	if (x.rows() != y.size() || x.rows() < 1) {
		throw Error(ErrorCode::InvalidArgument, "design matrix and target disagree in length");
	}
	if (!x.allFinite() || !y.allFinite()) {
		throw Error(ErrorCode::InvalidArgument, "design matrix contains non-finite values");
	}
	LinearModel m;
	const double ym = y.mean();
	if (x.cols() == 0) {
		if ((y.array() == y[0]).all()) {
			throw Error(ErrorCode::DegenerateDesign, "constant target with no feature columns");
		}
		m.intercept = ym;
		m.coef.resize(0);
		return m;
	}
	const Eigen::RowVectorXd xm = x.colwise().mean();
	const Matrix xc = x.rowwise() - xm;
	const Vector yc = y.array() - ym;
	Matrix gram = xc.transpose() * xc;
	gram.diagonal().array() += lambda;
	const Eigen::LDLT<Matrix> ldlt(gram);
	m.coef = ldlt.solve(xc.transpose() * yc);
	if (!m.coef.allFinite()) {
		m.coef = gram.completeOrthogonalDecomposition().solve(xc.transpose() * yc);
	} else {
		// Iterated Tikhonov: the ridge only conditions the solve. Each pass
		// shrinks its bias by lambda / (sigma^2 + lambda) in well-determined
		// directions and leaves null-space components at zero.
		for (int pass = 0; pass < 3; ++pass) {
			m.coef += ldlt.solve(xc.transpose() * (yc - xc * m.coef));
		}
	}
	m.intercept = ym - xm.dot(m.coef);
	return m;
}

// ---------------------------------------------------------------------------
// Trees

namespace {

// Split search shared by CART and Newton trees. Each row carries (a, b);
// a node's score is A^2 / (B + lambda) and its leaf value A / (B + lambda),
// negated for Newton trees. With a = y, b = 1, lambda = 0 this is variance
// reduction; for binary labels it picks the same splits as Gini.
struct SplitProblem {
	const Matrix &x;
	const Vector &a;
	const Vector &b;
	double lambda = 0.0;
	bool newton = false;
	int max_depth = 3;
	Index min_leaf = 1;
	Index max_features = 0;
	Rng *rng = nullptr;
};

double node_score(double sa, double sb, double lambda) {
	const double d = sb + lambda;
	return d > 0.0 ? sa * sa / d : 0.0;
}

struct Builder {
	const SplitProblem &p;
	Tree tree;

	int leaf(double sa, double sb) {
		Tree::Node n;
		const double d = sb + p.lambda;
		n.value = d > 0.0 ? (p.newton ? -sa / d : sa / d) : 0.0;
		tree.nodes.push_back(n);
		return static_cast<int>(tree.nodes.size()) - 1;
	}

	std::vector<Index> features() {
		const Index pcount = p.x.cols();
		std::vector<Index> f(static_cast<std::size_t>(pcount));
		std::iota(f.begin(), f.end(), Index{0});
		if (p.max_features > 0 && p.max_features < pcount && p.rng) {
			for (Index i = 0; i < p.max_features; ++i) {
				const Index j = i + p.rng->uniform_index(pcount - i);
				std::swap(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(j)]);
			}
			f.resize(static_cast<std::size_t>(p.max_features));
			std::sort(f.begin(), f.end());
		}
		return f;
	}

	int grow(std::vector<Index> &rows, int depth) {
		double sa = 0.0;
		double sb = 0.0;
		for (Index r : rows) {
			sa += p.a[r];
			sb += p.b[r];
		}
		const auto n = static_cast<Index>(rows.size());
		if (depth >= p.max_depth || n < 2 * p.min_leaf) {
			return leaf(sa, sb);
		}
		if (!p.newton) {
			bool pure = true;
			for (Index r : rows) {
				if (p.a[r] != p.a[rows.front()]) {
					pure = false;
					break;
				}
			}
			if (pure) {
				return leaf(sa, sb);
			}
		}
		const double parent = node_score(sa, sb, p.lambda);
		double best_gain = -std::numeric_limits<double>::infinity();
		Index best_feature = -1;
		double best_threshold = 0.0;
		std::vector<Index> order(rows);
		for (Index f : features()) {
			std::sort(order.begin(), order.end(), [&](Index i, Index j) {
				const double xi = p.x(i, f);
				const double xj = p.x(j, f);
				return xi < xj || (xi == xj && i < j);
			});
			double la = 0.0;
			double lb = 0.0;
			for (Index k = 0; k + 1 < n; ++k) {
				const Index r = order[static_cast<std::size_t>(k)];
				la += p.a[r];
				lb += p.b[r];
				const double xv = p.x(r, f);
				const double xn = p.x(order[static_cast<std::size_t>(k + 1)], f);
				if (xv == xn || k + 1 < p.min_leaf || n - k - 1 < p.min_leaf) {
					continue;
				}
				const double gain = node_score(la, lb, p.lambda) + node_score(sa - la, sb - lb, p.lambda) - parent;
				if (gain > best_gain) {
					best_gain = gain;
					best_feature = f;
					best_threshold = 0.5 * (xv + xn);
				}
			}
		}
		const double tol = 1e-12 * (std::abs(parent) + 1.0);
		const bool accept = best_feature >= 0 && (p.newton ? best_gain > tol : best_gain > -tol);
		if (!accept) {
			return leaf(sa, sb);
		}
		std::vector<Index> left;
		std::vector<Index> right;
		for (Index r : rows) {
			(p.x(r, best_feature) <= best_threshold ? left : right).push_back(r);
		}
		rows.clear();
		rows.shrink_to_fit();
		const int id = static_cast<int>(tree.nodes.size());
		tree.nodes.emplace_back();
		tree.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(best_feature);
		tree.nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
		const int l = grow(left, depth + 1);
		const int r = grow(right, depth + 1);
		tree.nodes[static_cast<std::size_t>(id)].left = l;
		tree.nodes[static_cast<std::size_t>(id)].right = r;
		tree.nodes[static_cast<std::size_t>(id)].value = 0.0;
		return id;
	}
};

Tree build_tree(const SplitProblem &p, std::vector<Index> rows) {
	Builder b{p, {}};
	b.grow(rows, 0);
	return std::move(b.tree);
}

std::vector<Index> all_rows(Index n) {
	std::vector<Index> r(static_cast<std::size_t>(n));
	std::iota(r.begin(), r.end(), Index{0});
	return r;
}

} // namespace

double Tree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd> &row) const {
	if (nodes.empty()) {
		return 0.0;
	}
	std::size_t i = 0;
	while (nodes[i].feature >= 0) {
		i = static_cast<std::size_t>(row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
	}
	return nodes[i].value;
}

Vector Tree::predict(const Matrix &x) const {
	Vector out(x.rows());
	for (Index i = 0; i < x.rows(); ++i) {
		out[i] = predict_row(x.row(i));
	}
	return out;
}

int Tree::depth() const {
	if (nodes.empty()) {
		return 0;
	}
	std::vector<std::pair<int, int>> stack{{0, 0}};
	int best = 0;
	while (!stack.empty()) {
		auto [i, d] = stack.back();
		stack.pop_back();
		best = std::max(best, d);
		const auto &n = nodes[static_cast<std::size_t>(i)];
		if (n.feature >= 0) {
			stack.push_back({n.left, d + 1});
			stack.push_back({n.right, d + 1});
		}
	}
	return best;
}

void Tree::count_usage(std::vector<int> &counts) const {
	for (const auto &n : nodes) {
		if (n.feature >= 0) {
			if (counts.size() <= static_cast<std::size_t>(n.feature)) {
				counts.resize(static_cast<std::size_t>(n.feature) + 1, 0);
			}
			++counts[static_cast<std::size_t>(n.feature)];
		}
	}
}

Tree fit_tree(const Matrix &x, const Vector &y, const TreeParams &params, const std::vector<Index> *rows, Rng *rng) {
	if (x.rows() != y.size() || x.rows() < 1) {
		throw Error(ErrorCode::InvalidArgument, "design matrix and target disagree in length");
	}
	const Vector ones = Vector::Ones(y.size());
	SplitProblem p{x, y, ones};
	p.max_depth = params.max_depth;
	p.min_leaf = std::max<Index>(params.min_leaf, 1);
	p.max_features = params.max_features;
	p.rng = rng;
	return build_tree(p, rows ? *rows : all_rows(x.rows()));
}

std::vector<Index> bootstrap_sample(Index n, Rng &rng) {
	std::vector<Index> rows(static_cast<std::size_t>(n));
	for (auto &r : rows) {
		r = rng.uniform_index(n);
	}
	std::sort(rows.begin(), rows.end());
	return rows;
}

Index sqrt_features(Index p) {
	return std::max<Index>(1, static_cast<Index>(std::floor(std::sqrt(static_cast<double>(p)))));
}

Vector Forest::predict(const Matrix &x) const {
	Vector out = Vector::Zero(x.rows());
	for (const auto &t : trees) {
		out += t.predict(x);
	}
	return trees.empty() ? out : (out / static_cast<double>(trees.size())).eval();
}

double Forest::predict_row(const Eigen::Ref<const Eigen::RowVectorXd> &row) const {
	double s = 0.0;
	for (const auto &t : trees) {
		s += t.predict_row(row);
	}
	return trees.empty() ? 0.0 : s / static_cast<double>(trees.size());
}

std::vector<int> Forest::predict_class(const Matrix &x) const {
	const Vector p = predict(x);
	std::vector<int> out(static_cast<std::size_t>(p.size()));
	for (Index i = 0; i < p.size(); ++i) {
		out[static_cast<std::size_t>(i)] = p[i] >= 0.5 ? 1 : 0;
	}
	return out;
}

Forest fit_rf(const Matrix &x, const Vector &y, const ForestParams &params, std::uint64_t seed) {
	if (params.n_trees < 1) {
		throw Error(ErrorCode::InvalidArgument, "a forest needs at least one tree");
	}
	Forest f;
	f.task = params.tree.task;
	f.feature_usage.assign(static_cast<std::size_t>(x.cols()), 0);
	TreeParams tp = params.tree;
	if (tp.max_features < 0) {
		tp.max_features = sqrt_features(x.cols());
	}
	for (int t = 0; t < params.n_trees; ++t) {
		Rng rng(derive_seed(seed, "tree" + std::to_string(t)));
		const auto rows = params.bootstrap ? bootstrap_sample(x.rows(), rng) : all_rows(x.rows());
		f.trees.push_back(fit_tree(x, y, tp, &rows, &rng));
		f.trees.back().count_usage(f.feature_usage);
	}
	return f;
}

// ---------------------------------------------------------------------------
// Objectives

double SquaredObjective::loss(const Matrix &scores) const {
	return 0.5 * (scores.col(0) - y_).squaredNorm() / static_cast<double>(y_.size());
}

void SquaredObjective::gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const {
	grad = scores.col(0) - y_;
	hess = Matrix::Ones(y_.size(), 1);
}

Eigen::RowVectorXd SquaredObjective::base_score() const {
	return Eigen::RowVectorXd::Constant(1, y_.mean());
}

namespace {

double sigmoid(double s) {
	return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

// log(1 + exp(s)) without overflow.
double softplus(double s) {
	return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

} // namespace

double LogisticObjective::loss(const Matrix &scores) const {
	double l = 0.0;
	for (Index i = 0; i < y_.size(); ++i) {
		const double s = scores(i, 0);
		l += softplus(s) - y_[i] * s;
	}
	return l / static_cast<double>(y_.size());
}

void LogisticObjective::gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const {
	grad.resize(y_.size(), 1);
	hess.resize(y_.size(), 1);
	for (Index i = 0; i < y_.size(); ++i) {
		const double p = sigmoid(scores(i, 0));
		grad(i, 0) = p - y_[i];
		hess(i, 0) = p * (1.0 - p);
	}
}

Eigen::RowVectorXd LogisticObjective::base_score() const {
	const double p = std::clamp(y_.mean(), 1e-6, 1.0 - 1e-6);
	return Eigen::RowVectorXd::Constant(1, std::log(p / (1.0 - p)));
}

Eigen::RowVectorXd softmax(const Eigen::Ref<const Eigen::RowVectorXd> &scores) {
	const double mx = scores.maxCoeff();
	Eigen::RowVectorXd p = (scores.array() - mx).exp();
	return p / p.sum();
}

double SoftmaxWeightedError::row_loss(const Eigen::Ref<const Eigen::RowVectorXd> &scores, Index row) const {
	return softmax(scores).dot(e_.row(row));
}

double SoftmaxWeightedError::loss(const Matrix &scores) const {
	double l = 0.0;
	for (Index i = 0; i < e_.rows(); ++i) {
		l += row_loss(scores.row(i), i);
	}
	return l / static_cast<double>(e_.rows());
}

void SoftmaxWeightedError::gradient(const Matrix &scores, Matrix &grad, Matrix &hess) const {
	grad.resize(e_.rows(), e_.cols());
	hess.resize(e_.rows(), e_.cols());
	for (Index i = 0; i < e_.rows(); ++i) {
		const Eigen::RowVectorXd p = softmax(scores.row(i));
		const double mean_loss = p.dot(e_.row(i));
		for (Index j = 0; j < e_.cols(); ++j) {
			const double g = p[j] * (e_(i, j) - mean_loss);
			grad(i, j) = g;
			hess(i, j) = g * (1.0 - 2.0 * p[j]);
		}
	}
}

Eigen::RowVectorXd SoftmaxWeightedError::base_score() const {
	return Eigen::RowVectorXd::Zero(e_.cols());
}

// ---------------------------------------------------------------------------
// Boosting

Matrix Booster::raw_scores(const Matrix &x) const {
	Matrix s = base.replicate(x.rows(), 1);
	for (std::size_t t = 0; t < trees.size(); ++t) {
		const auto d = static_cast<Index>(t % static_cast<std::size_t>(dims));
		s.col(d) += shrink[t] * trees[t].predict(x);
	}
	return s;
}

Vector Booster::predict(const Matrix &x) const {
	return raw_scores(x).col(0);
}

Booster fit_gbt(const Matrix &x, const Objective &objective, const GbtParams &params) {
	if (x.rows() != objective.rows() || x.rows() < 1) {
		throw Error(ErrorCode::InvalidArgument, "design matrix and objective disagree in length");
	}
	Booster b;
	b.dims = objective.dims();
	b.base = objective.base_score();
	Matrix scores = b.base.replicate(x.rows(), 1);
	Matrix grad;
	Matrix hess;
	double current = objective.loss(scores);
	b.loss_trace.push_back(current);
	const auto rows = all_rows(x.rows());
	for (int round = 0; round < params.n_rounds; ++round) {
		objective.gradient(scores, grad, hess);
		std::vector<Tree> round_trees;
		Matrix step(x.rows(), b.dims);
		for (Index d = 0; d < b.dims; ++d) {
			const Vector g = grad.col(d);
			const Vector h = hess.col(d).cwiseMax(kHessianFloor);
			SplitProblem p{x, g, h};
			p.lambda = params.lambda;
			p.newton = true;
			p.max_depth = params.max_depth;
			p.min_leaf = params.min_leaf;
			round_trees.push_back(build_tree(p, rows));
			step.col(d) = round_trees.back().predict(x);
		}
		double shrink = params.learning_rate;
		double next = objective.loss(scores + shrink * step);
		for (int halving = 0; halving < 8 && next > current; ++halving) {
			shrink *= 0.5;
			next = objective.loss(scores + shrink * step);
		}
		if (next > current) {
			shrink = 0.0;
			next = current;
		}
		scores += shrink * step;
		current = next;
		for (auto &t : round_trees) {
			b.trees.push_back(std::move(t));
			b.shrink.push_back(shrink);
		}
		b.loss_trace.push_back(current);
	}
	return b;
}

std::string_view to_string(MetaModelKind kind) {
	switch (kind) {
	case MetaModelKind::linreg: return "linreg";
	case MetaModelKind::rf: return "rf";
	case MetaModelKind::gbt: return "gbt";
	}
	return "linreg";
}

MetaModelKind parse_meta_model(std::string_view name) {
	if (name == "linreg") return MetaModelKind::linreg;
	if (name == "rf") return MetaModelKind::rf;
	if (name == "gbt" || name == "lgbm" || name == "xgboost") return MetaModelKind::gbt;
	throw Error(ErrorCode::UnknownName, "unknown meta-model '" + std::string(name) + "' (expected linreg, rf, gbt, lgbm or xgboost)");
}

Vector Regressor::predict(const Matrix &x) const {
	return std::visit([&](const auto &m) -> Vector { return m.predict(x); }, model);
}

Regressor fit_regressor(MetaModelKind kind, const Matrix &x, const Vector &y, std::uint64_t seed) {
	Regressor r;
	r.kind = kind;
	switch (kind) {
	case MetaModelKind::linreg:
		r.model = fit_linreg(x, y);
		break;
	case MetaModelKind::rf: {
		ForestParams fp;
		fp.tree = {TreeTask::regression, 12, 2, -1};
		r.model = fit_rf(x, y, fp, seed);
		break;
	}
	case MetaModelKind::gbt: {
		GbtParams gp;
		gp.min_leaf = std::min<Index>(gp.min_leaf, std::max<Index>(1, x.rows() / 4));
		r.model = fit_gbt(x, SquaredObjective(y), gp);
		break;
	}
	}
	return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json vec_to_json(const Eigen::Ref<const Eigen::RowVectorXd> &v) {
	return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::RowVectorXd json_to_row(const nlohmann::json &j) {
	const auto v = j.get<std::vector<double>>();
	return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Index>(v.size()));
}

} // namespace

nlohmann::json to_json(const LinearModel &m) {
	return {{"type", "linreg"}, {"intercept", m.intercept}, {"coef", vec_to_json(m.coef.transpose())}};
}

nlohmann::json to_json(const Tree &t) {
	auto nodes = nlohmann::json::array();
	for (const auto &n : t.nodes) {
		nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
	}
	return nodes;
}

nlohmann::json to_json(const Forest &f) {
	auto trees = nlohmann::json::array();
	for (const auto &t : f.trees) {
		trees.push_back(to_json(t));
	}
	return {{"type", "rf"},
	        {"task", f.task == TreeTask::classification ? "classification" : "regression"},
	        {"feature_usage", f.feature_usage},
	        {"trees", std::move(trees)}};
}

nlohmann::json to_json(const Booster &b) {
	auto trees = nlohmann::json::array();
	for (const auto &t : b.trees) {
		trees.push_back(to_json(t));
	}
	return {{"type", "gbt"}, {"dims", b.dims}, {"base", vec_to_json(b.base)}, {"shrink", b.shrink}, {"trees", std::move(trees)}};
}

LinearModel linear_from_json(const nlohmann::json &j) {
	LinearModel m;
	m.intercept = j.at("intercept").get<double>();
	m.coef = json_to_row(j.at("coef")).transpose();
	return m;
}

Tree tree_from_json(const nlohmann::json &j) {
	Tree t;
	for (const auto &n : j) {
		t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(), n.at(4).get<double>()});
	}
	return t;
}

Forest forest_from_json(const nlohmann::json &j) {
	Forest f;
	f.task = j.at("task").get<std::string>() == "classification" ? TreeTask::classification : TreeTask::regression;
	f.feature_usage = j.at("feature_usage").get<std::vector<int>>();
	for (const auto &t : j.at("trees")) {
		f.trees.push_back(tree_from_json(t));
	}
	return f;
}

Booster booster_from_json(const nlohmann::json &j) {
	Booster b;
	b.dims = j.at("dims").get<Index>();
	b.base = json_to_row(j.at("base"));
	b.shrink = j.at("shrink").get<std::vector<double>>();
	for (const auto &t : j.at("trees")) {
		b.trees.push_back(tree_from_json(t));
	}
	return b;
}

} // namespace tsens
