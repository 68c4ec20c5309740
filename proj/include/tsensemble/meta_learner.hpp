#pragma once

#include "tsensemble/learners.hpp"
#include "tsensemble/meta_features.hpp"
#include "tsensemble/metrics.hpp"

#include <iosfwd>
#include <map>
#include <set>

namespace tsens {

/// Per dataset, the competition rank of every spec among the specs (failed
/// or excluded records share the worst rank). Throws IncompleteGrid when a
/// dataset lacks a record for one of the specs.
using SpecRanks = std::map<std::string, std::map<std::string, double>>;
SpecRanks spec_ranks(const std::vector<ResultRecord> &records, const std::vector<std::string> &specs);

struct MetaDataset {
	std::vector<std::string> dataset_ids;
	std::vector<std::string> feature_names;
	std::vector<std::string> spec_ids;
	Matrix features;
	/// labels(row, spec) in {0, 1}.
	Eigen::MatrixXi labels;
	int k = 0;
};

/// Label 1 iff the spec's rank on the dataset is at most K; ties at the
/// boundary all count as 1.
MetaDataset build_meta_dataset(const SpecRanks &ranks, const std::map<std::string, MetaFeatureVector> &features,
                               const std::vector<std::string> &specs, int k);

void write_meta_dataset(std::ostream &out, const MetaDataset &meta);

/// Row indices (into the input) with the minority class duplicated uniformly
/// at random until both classes have equal counts. Unchanged with a warning
/// when a class is absent.
std::vector<Index> oversample_balance(const Eigen::Ref<const Eigen::VectorXi> &labels, Rng &rng);

struct SelectorParams {
	ForestParams forest{100, {TreeTask::classification, 12, 1, -1}, true};
	Index min_rows = 20;
};

struct SelectorModel {
	std::string feature_version{kFeatureSetVersion};
	std::vector<std::string> feature_names;
	std::vector<std::string> spec_ids;
	int k = 0;
	/// nullopt for single-class targets, predicted by `constant`.
	std::vector<std::optional<Forest>> classifiers;
	std::vector<int> constant;
	/// Training-corpus mean rank per spec, for the empty-selection fallback.
	std::vector<double> corpus_mean_rank;

	/// Split counts per feature summed over every selector.
	std::vector<int> feature_usage() const;
};

SelectorModel train_selectors(const MetaDataset &meta, const SpecRanks &train_ranks, std::uint64_t seed,
                              const SelectorParams &params = {});

/// Specs whose classifier votes 1; when none does, the spec with the lowest
/// corpus mean rank (logged).
std::vector<std::string> select_specs(const SelectorModel &model, const MetaFeatureVector &features);

struct MetaEvalPoint {
	int k = 0;
	double n = 0.0;
	double r = 0.0;
};

/// r = best rank among the selected specs per dataset; N and R are the means
/// of n and r over datasets.
MetaEvalPoint evaluate_selection(const SpecRanks &test_ranks, const std::map<std::string, std::vector<std::string>> &selections);

/// Mean rank over datasets for every spec, in `specs` order.
std::vector<double> corpus_mean_ranks(const SpecRanks &ranks, const std::vector<std::string> &specs);

/// The n specs with the lowest corpus mean rank (ties by name).
std::vector<std::string> baseline_autorank(const std::vector<std::string> &specs, const std::vector<double> &mean_ranks, Index n);
/// A uniform n-subset of the grid.
std::vector<std::string> baseline_random(const std::vector<std::string> &specs, Index n, Rng &rng);

nlohmann::json to_json(const SelectorModel &m);
SelectorModel selector_from_json(const nlohmann::json &j);

} // namespace tsens
