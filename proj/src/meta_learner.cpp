#include "tsensemble/meta_learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace tsens {

SpecRanks spec_ranks(const std::vector<ResultRecord> &records, const std::vector<std::string> &specs) {
	const std::set<std::string> wanted(specs.begin(), specs.end());
	std::map<std::string, std::map<std::string, double>> errors;
	for (const auto &r : records) {
		if (!wanted.contains(r.algorithm_id)) {
			continue;
		}
		const double e = r.status == RecordStatus::ok ? r.smape : std::numeric_limits<double>::infinity();
		errors[r.dataset_id][r.algorithm_id] = e;
	}
	SpecRanks out;
	for (const auto &[dataset, errs] : errors) {
		if (errs.size() != specs.size()) {
			for (const auto &s : specs) {
				if (!errs.contains(s)) {
					throw Error(ErrorCode::IncompleteGrid, "dataset " + dataset + " has no result for " + s);
				}
			}
		}
		std::vector<double> v;
		for (const auto &s : specs) v.push_back(errs.at(s));
		const auto ranks = min_ranks(v);
		auto &row = out[dataset];
		for (std::size_t i = 0; i < specs.size(); ++i) row[specs[i]] = ranks[i];
	}
	return out;
}

MetaDataset build_meta_dataset(const SpecRanks &ranks, const std::map<std::string, MetaFeatureVector> &features,
                               const std::vector<std::string> &specs, int k) {
	if (k < 1) {
		throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
	}
	MetaDataset meta;
	meta.k = k;
	meta.spec_ids = specs;
	for (const auto &[id, _] : ranks) {
		if (!features.contains(id)) {
			throw Error(ErrorCode::IncompleteGrid, "dataset " + id + " has no meta-features");
		}
		meta.dataset_ids.push_back(id);
	}
	if (meta.dataset_ids.empty()) {
		throw Error(ErrorCode::EmptyStore, "no datasets to build a meta-dataset from");
	}
	meta.feature_names = features.at(meta.dataset_ids.front()).names;
	const auto rows = static_cast<Index>(meta.dataset_ids.size());
	meta.features.resize(rows, static_cast<Index>(meta.feature_names.size()));
	meta.labels.resize(rows, static_cast<Index>(specs.size()));
	for (Index i = 0; i < rows; ++i) {
		const auto &id = meta.dataset_ids[static_cast<std::size_t>(i)];
		const auto &f = features.at(id);
		if (f.names != meta.feature_names) {
			throw Error(ErrorCode::FeatureVersionMismatch, "dataset " + id + " has a different feature layout");
		}
		meta.features.row(i) = f.values;
		const auto &r = ranks.at(id);
		for (std::size_t s = 0; s < specs.size(); ++s) {
			auto it = r.find(specs[s]);
			if (it == r.end()) {
				throw Error(ErrorCode::IncompleteGrid, "dataset " + id + " has no rank for " + specs[s]);
			}
			meta.labels(i, static_cast<Index>(s)) = it->second <= k ? 1 : 0;
		}
	}
	return meta;
}

void write_meta_dataset(std::ostream &out, const MetaDataset &meta) {
	out << "# feature_set=" << kFeatureSetVersion << " k=" << meta.k << '\n';
	out << "dataset_id";
	for (const auto &f : meta.feature_names) out << ',' << f;
	for (const auto &s : meta.spec_ids) out << ",\"" << s << '"';
	out << '\n';
	char buf[64];
	for (Index i = 0; i < meta.features.rows(); ++i) {
		out << meta.dataset_ids[static_cast<std::size_t>(i)];
		for (Index j = 0; j < meta.features.cols(); ++j) {
			std::snprintf(buf, sizeof buf, "%.17g", meta.features(i, j));
			out << ',' << buf;
		}
		for (Index j = 0; j < meta.labels.cols(); ++j) out << ',' << meta.labels(i, j);
		out << '\n';
	}
}

std::vector<Index> oversample_balance(const Eigen::Ref<const Eigen::VectorXi> &labels, Rng &rng) {
	std::vector<Index> pos;
	std::vector<Index> neg;
	for (Index i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
	std::vector<Index> out(static_cast<std::size_t>(labels.size()));
	std::iota(out.begin(), out.end(), Index{0});
	if (pos.empty() || neg.empty()) {
		warn("oversampling skipped: only one class present");
		return out;
	}
	const auto &minority = pos.size() < neg.size() ? pos : neg;
	const auto deficit = static_cast<Index>(std::max(pos.size(), neg.size()) - minority.size());
	for (Index i = 0; i < deficit; ++i) {
		out.push_back(minority[static_cast<std::size_t>(rng.uniform_index(static_cast<Index>(minority.size())))]);
	}
	return out;
}

std::vector<int> SelectorModel::feature_usage() const {
	std::vector<int> total(feature_names.size(), 0);
	for (const auto &c : classifiers) {
		if (!c) continue;
		for (std::size_t i = 0; i < c->feature_usage.size() && i < total.size(); ++i) total[i] += c->feature_usage[i];
	}
	return total;
}

std::vector<double> corpus_mean_ranks(const SpecRanks &ranks, const std::vector<std::string> &specs) {
	std::vector<double> out(specs.size(), 0.0);
	if (ranks.empty()) return out;
	for (const auto &[_, row] : ranks) {
		for (std::size_t s = 0; s < specs.size(); ++s) out[s] += row.at(specs[s]);
	}
	for (auto &v : out) v /= static_cast<double>(ranks.size());
	return out;
}

SelectorModel train_selectors(const MetaDataset &meta, const SpecRanks &train_ranks, std::uint64_t seed, const SelectorParams &params) {
	if (meta.features.rows() < params.min_rows) {
		throw Error(ErrorCode::CorpusTooSmall, "selector training needs at least " + std::to_string(params.min_rows) + " rows");
	}
	SelectorModel model;
	model.feature_names = meta.feature_names;
	model.spec_ids = meta.spec_ids;
	model.k = meta.k;
	model.corpus_mean_rank = corpus_mean_ranks(train_ranks, meta.spec_ids);
	for (Index s = 0; s < meta.labels.cols(); ++s) {
		const Eigen::VectorXi y = meta.labels.col(s);
		const int ones = y.sum();
		if (ones == 0 || ones == y.size()) {
			model.classifiers.emplace_back(std::nullopt);
			model.constant.push_back(ones == 0 ? 0 : 1);
			continue;
		}
		const std::string tag = "selector/" + meta.spec_ids[static_cast<std::size_t>(s)];
		Rng rng(derive_seed(seed, tag + "/oversample"));
		const auto rows = oversample_balance(y, rng);
		Matrix x(static_cast<Index>(rows.size()), meta.features.cols());
		Vector target(static_cast<Index>(rows.size()));
		for (std::size_t i = 0; i < rows.size(); ++i) {
			x.row(static_cast<Index>(i)) = meta.features.row(rows[i]);
			target[static_cast<Index>(i)] = y[rows[i]];
		}
		model.classifiers.emplace_back(fit_rf(x, target, params.forest, derive_seed(seed, tag)));
		model.constant.push_back(-1);
	}
	return model;
}

std::vector<std::string> select_specs(const SelectorModel &model, const MetaFeatureVector &features) {
	if (features.names != model.feature_names) {
		throw Error(ErrorCode::FeatureVersionMismatch, "selectors were trained on feature set " + model.feature_version + " with a different layout");
	}
	std::vector<std::string> out;
	for (std::size_t s = 0; s < model.spec_ids.size(); ++s) {
		const auto &c = model.classifiers[s];
		const int vote = c ? (c->predict_row(features.values) >= 0.5 ? 1 : 0) : model.constant[s];
		if (vote == 1) out.push_back(model.spec_ids[s]);
	}
	if (out.empty() && !model.spec_ids.empty()) {
		const auto best = baseline_autorank(model.spec_ids, model.corpus_mean_rank, 1);
		warn("no selector voted 1; falling back to " + best.front());
		return best;
	}
	return out;
}

MetaEvalPoint evaluate_selection(const SpecRanks &test_ranks, const std::map<std::string, std::vector<std::string>> &selections) {
	MetaEvalPoint p;
	if (selections.empty()) return p;
	for (const auto &[id, chosen] : selections) {
		const auto &row = test_ranks.at(id);
		double best = std::numeric_limits<double>::infinity();
		for (const auto &s : chosen) best = std::min(best, row.at(s));
		p.n += static_cast<double>(chosen.size());
		p.r += best;
	}
	p.n /= static_cast<double>(selections.size());
	p.r /= static_cast<double>(selections.size());
	return p;
}

std::vector<std::string> baseline_autorank(const std::vector<std::string> &specs, const std::vector<double> &mean_ranks, Index n) {
	if (n < 1) {
		throw Error(ErrorCode::InvalidArgument, "baseline selection size must be at least 1");
	}
	std::vector<std::size_t> order(specs.size());
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
		if (mean_ranks[a] != mean_ranks[b]) return mean_ranks[a] < mean_ranks[b];
		return specs[a] < specs[b];
	});
	std::vector<std::string> out;
	for (std::size_t i = 0; i < order.size() && static_cast<Index>(i) < n; ++i) out.push_back(specs[order[i]]);
	return out;
}

std::vector<std::string> baseline_random(const std::vector<std::string> &specs, Index n, Rng &rng) {
	if (n < 1) {
		throw Error(ErrorCode::InvalidArgument, "baseline selection size must be at least 1");
	}
	std::vector<std::string> pool = specs;
	const Index take = std::min<Index>(n, static_cast<Index>(pool.size()));
	for (Index i = 0; i < take; ++i) {
		const Index j = i + rng.uniform_index(static_cast<Index>(pool.size()) - i);
		std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
	}
	pool.resize(static_cast<std::size_t>(take));
	return pool;
}

nlohmann::json to_json(const SelectorModel &m) {
	auto cls = nlohmann::json::array();
	for (std::size_t i = 0; i < m.classifiers.size(); ++i) {
		cls.push_back(m.classifiers[i] ? to_json(*m.classifiers[i]) : nlohmann::json{{"type", "constant"}, {"value", m.constant[i]}});
	}
	return {{"format", "tsensemble-selectors"}, {"version", 1}, {"feature_set", m.feature_version},
	        {"features", m.feature_names}, {"specs", m.spec_ids}, {"k", m.k},
	        {"corpus_mean_rank", m.corpus_mean_rank}, {"classifiers", std::move(cls)}};
}

SelectorModel selector_from_json(const nlohmann::json &j) {
	if (j.value("format", "") != "tsensemble-selectors") {
		throw Error(ErrorCode::SchemaError, "not a selector file");
	}
	SelectorModel m;
	m.feature_version = j.at("feature_set").get<std::string>();
	if (m.feature_version != kFeatureSetVersion) {
		throw Error(ErrorCode::FeatureVersionMismatch, "selectors use feature set " + m.feature_version + ", this build provides " + std::string(kFeatureSetVersion));
	}
	m.feature_names = j.at("features").get<std::vector<std::string>>();
	m.spec_ids = j.at("specs").get<std::vector<std::string>>();
	m.k = j.at("k").get<int>();
	m.corpus_mean_rank = j.at("corpus_mean_rank").get<std::vector<double>>();
	for (const auto &c : j.at("classifiers")) {
		if (c.at("type") == "constant") {
			m.classifiers.emplace_back(std::nullopt);
			m.constant.push_back(c.at("value").get<int>());
		} else {
			m.classifiers.emplace_back(forest_from_json(c));
			m.constant.push_back(-1);
		}
	}
	return m;
}

} // namespace tsens
