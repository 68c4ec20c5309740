#pragma once

#include "tsensemble/base_models.hpp"
#include "tsensemble/ensembles.hpp"
#include "tsensemble/meta_learner.hpp"
#include "tsensemble/metrics.hpp"
#include "tsensemble/synthetic.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>

namespace tsens {

namespace fs = std::filesystem;

struct MetaConfig {
	int k_max = 15;
	double test_fraction = 0.2;
	int random_reps = 50;
};

/// Everything a run needs. Relative corpus paths resolve against the
/// directory of the config file.
struct RunConfig {
	std::vector<fs::path> corpus;
	std::optional<fs::path> manifest;
	std::optional<SyntheticCorpusSpec> synthetic;
	SplitSpec split{12, std::nullopt};
	double valid_fraction = kDefaultValidFraction;
	std::vector<BaseModel> pool = all_base_models();
	/// Canonical spec strings.
	std::vector<std::string> grid;
	std::uint64_t seed = 42;
	int jobs = 1;
	fs::path out = "out";
	std::optional<fs::path> holidays;
	MetaConfig meta;

	/// Throws ConfigError on the first problem found.
	void validate() const;
	std::vector<EnsembleSpec> specs() const;
};

RunConfig default_config();
RunConfig config_from_json(const nlohmann::json &j, const fs::path &base_dir = {});
RunConfig load_config(const fs::path &path);
nlohmann::json to_json(const RunConfig &config);

// --- CSV ---------------------------------------------------------------------

/// RFC 4180 style: quoted fields may contain commas, doubled quotes and
/// newlines. Lines starting with '#' outside quotes are skipped.
std::vector<std::vector<std::string>> read_csv(std::istream &in);
std::string csv_field(std::string_view text);
std::string format_double(double v);

// --- Ingest ------------------------------------------------------------------

/// One file: optional `timestamp`, required `target`, optional `series_id`
/// (long format holding several series), anything else exogenous. Column
/// kinds are inferred: {0,1} or {true,false} is boolean, all-numeric is
/// numeric, the rest categorical with sorted levels.
std::vector<TimeSeries> read_series_csv(const fs::path &path, const std::string &source = "other",
                                        std::optional<int> frequency = std::nullopt);
std::vector<TimeSeries> read_series_csv(std::istream &in, const std::string &default_id, const std::string &source = "other",
                                        std::optional<int> frequency = std::nullopt);

/// Manifest columns: path, source and optionally frequency.
std::vector<TimeSeries> read_manifest(const fs::path &path);

/// A CSV file, a manifest (file named *manifest*.csv) or a directory of CSV
/// files read in name order.
std::vector<TimeSeries> ingest(const fs::path &path);

/// The configured corpus; duplicate ids are a ConfigError.
std::vector<TimeSeries> load_corpus(const RunConfig &config);

// --- Results store -----------------------------------------------------------

inline constexpr std::string_view kResultsHeader = "# tsensemble-results v1";

/// Records in file order. A truncated final line (interrupted append) is
/// ignored; anything else malformed is a SchemaError.
std::vector<ResultRecord> read_results(const fs::path &path);
/// Sorted by (dataset_id, algorithm_id); runtimes go to the sidecar only.
void write_results(const fs::path &path, std::vector<ResultRecord> records);
void write_result_lines(std::ostream &out, const std::vector<ResultRecord> &records);
/// Fills `rank` (average ranks among ok records of a dataset).
void assign_ranks(std::vector<ResultRecord> &records);

// --- Experiment --------------------------------------------------------------

/// Exogenous columns, calendar columns and long-period Fourier terms over
/// every row of the full series (training prefix and test horizon).
ExogenousFrame build_exogenous_frame(const TimeSeries &full, const SeasonalityInfo &seasonality, const HolidaySet *holidays);

struct RunSummary {
	Index series = 0;
	Index computed = 0;
	Index skipped = 0;
	Index failed = 0;
};

/// Output layout under config.out: config.json, results.csv, timings.csv,
/// features.csv, pools/<id>.json, fforma.json, warnings.log.
RunSummary run_experiment(const RunConfig &config);
RunSummary run_experiment(const RunConfig &config, const std::vector<TimeSeries> &corpus);

// --- Reports -----------------------------------------------------------------

enum class ReportKind { ranks, wins, cd, per_source };
ReportKind parse_report_kind(std::string_view name);

bool is_base_model(std::string_view algorithm_id);

struct WinShare {
	int ensemble_wins = 0;
	int base_wins = 0;
	double share = 0.0;
};
/// Rank-1 finishes split into ensembles and base models; tied winners all
/// count.
WinShare ensemble_win_share(const RankTable &table);

/// Writes the CSV (and SVG where one exists) files for one report kind into
/// `dir` and returns their paths. Throws EmptyStore without records.
std::vector<fs::path> write_report(const std::vector<ResultRecord> &records, ReportKind kind, const fs::path &dir,
                                   double alpha = 0.05);

// --- Meta pipeline -----------------------------------------------------------

struct MetaPartition {
	std::vector<std::string> train;
	std::vector<std::string> test;
};

/// Seeded shuffle of the sorted ids; the first ceil(fraction * n) go to test.
MetaPartition partition_datasets(std::vector<std::string> ids, double test_fraction, std::uint64_t seed);

struct MetaCurveRow {
	int k = 0;
	std::string strategy;
	double n = 0.0;
	double r = 0.0;
};

struct MetaSweep {
	std::vector<MetaCurveRow> curve;
	/// R with the whole grid selected on every test dataset.
	double full_grid_r = 0.0;
	std::vector<std::string> feature_names;
	std::vector<int> feature_usage;
};

/// Loaded run artefacts the meta commands work from.
struct MetaInputs {
	std::vector<std::string> specs;
	SpecRanks train_ranks;
	SpecRanks test_ranks;
	std::map<std::string, MetaFeatureVector> features;
};

MetaInputs load_meta_inputs(const RunConfig &config);

MetaDataset meta_build(const MetaInputs &in, int k);
SelectorModel meta_train(const MetaInputs &in, int k, std::uint64_t seed);
std::map<std::string, std::vector<std::string>> meta_select(const MetaInputs &in, const SelectorModel &model);

/// K = 1..k_max for the meta-learner with autorank and random baselines
/// matched to its per-dataset selection sizes. Writes meta_curve.csv,
/// meta_diff.csv and feature_usage.csv under config.out.
MetaSweep meta_eval(const RunConfig &config);

// --- Inspect -----------------------------------------------------------------

void inspect(const RunConfig &config, const std::string &dataset_id, std::ostream &out);

} // namespace tsens
