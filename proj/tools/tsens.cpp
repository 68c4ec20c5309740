#include "tsensemble/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace tsens;

namespace {

struct Globals {
	std::string config;
	std::optional<std::uint64_t> seed;
	std::optional<int> jobs;
	std::string out;
};

RunConfig resolve_config(const Globals &g, bool need_corpus) {
	RunConfig c;
	if (!g.config.empty()) {
		c = load_config(g.config);
	} else if (need_corpus) {
		throw Error(ErrorCode::ConfigError, "this command needs --config");
	} else {
		c = default_config();
	}
	if (g.seed) c.seed = *g.seed;
	if (g.jobs) c.jobs = *g.jobs;
	if (!g.out.empty()) c.out = g.out;
	if (need_corpus) c.validate();
	return c;
}

fs::path meta_dir(const RunConfig &c) {
	fs::create_directories(c.out / "meta");
	return c.out / "meta";
}

std::string k_suffix(int k) {
	return "_k" + std::to_string(k);
}

} // namespace

int main(int argc, char **argv) {
	CLI::App app{"Forecast ensemble benchmark and meta-learner"};
	app.require_subcommand(1);
	Globals g;
	app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
	app.add_option("--seed", g.seed, "Overrides the configured seed");
	app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
	app.add_option("--out", g.out, "Output directory (overrides the configured one)");

	auto *run = app.add_subcommand("run", "Fit every base model and ensemble+HP on every series");

	auto *report = app.add_subcommand("report", "Write report files from the results store");
	std::string report_kind;
	double alpha = 0.05;
	report->add_option("kind", report_kind, "ranks | wins | cd | per-source")
	    ->required()
	    ->check(CLI::IsMember({"ranks", "wins", "cd", "per-source"}));
	report->add_option("--alpha", alpha, "Nemenyi significance level (0.05 or 0.10)");

	auto *meta = app.add_subcommand("meta", "Meta-learner pipeline");
	meta->require_subcommand(1);
	int k = 5;
	auto *build = meta->add_subcommand("build", "Write the labelled meta-dataset of the training corpus");
	auto *train = meta->add_subcommand("train", "Train one selector per ensemble+HP");
	auto *select = meta->add_subcommand("select", "Select ensemble+HPs for the test corpus");
	auto *eval = meta->add_subcommand("eval", "Sweep K and compare against the baselines");
	for (auto *sub : {build, train, select}) sub->add_option("--k", k, "Rank cutoff for positive labels")->check(CLI::PositiveNumber);

	auto *insp = app.add_subcommand("inspect", "Describe one series and its records");
	std::string dataset_id;
	insp->add_option("dataset_id", dataset_id)->required();

	CLI11_PARSE(app, argc, argv);

	try {
		if (*run) {
			const auto c = resolve_config(g, true);
			const auto s = run_experiment(c);
			std::cout << "series " << s.series << ", new records " << s.computed << " (" << s.failed << " failed), kept "
			          << s.skipped << '\n';
		} else if (*report) {
			const auto c = resolve_config(g, false);
			const auto records = read_results(c.out / "results.csv");
			for (const auto &p : write_report(records, parse_report_kind(report_kind), c.out / "reports", alpha)) {
				std::cout << p.string() << '\n';
			}
		} else if (*meta) {
			const auto c = resolve_config(g, false);
			if (*eval) {
				const auto sweep = meta_eval(c);
				std::cout << "k,strategy,n,r\n";
				for (const auto &row : sweep.curve) {
					std::cout << row.k << ',' << row.strategy << ',' << format_double(row.n) << ',' << format_double(row.r) << '\n';
				}
				std::cout << "full grid R = " << format_double(sweep.full_grid_r) << '\n';
			} else {
				const auto in = load_meta_inputs(c);
				const auto dir = meta_dir(c);
				if (*build) {
					std::ofstream out(dir / ("meta_dataset" + k_suffix(k) + ".csv"));
					write_meta_dataset(out, meta_build(in, k));
					std::cout << (dir / ("meta_dataset" + k_suffix(k) + ".csv")).string() << '\n';
				} else if (*train) {
					const auto model = meta_train(in, k, c.seed);
					std::ofstream(dir / ("selectors" + k_suffix(k) + ".json")) << to_json(model).dump() << '\n';
					std::cout << (dir / ("selectors" + k_suffix(k) + ".json")).string() << '\n';
				} else if (*select) {
					const auto path = dir / ("selectors" + k_suffix(k) + ".json");
					std::ifstream in_file(path);
					if (!in_file) {
						throw Error(ErrorCode::Io, "no " + path.string() + "; run `meta train --k " + std::to_string(k) + "` first");
					}
					const auto model = selector_from_json(nlohmann::json::parse(in_file));
					const auto chosen = meta_select(in, model);
					std::ofstream out(dir / ("selections" + k_suffix(k) + ".csv"));
					out << "dataset_id,n,best_rank,selected\n";
					for (const auto &[id, specs] : chosen) {
						double best = std::numeric_limits<double>::infinity();
						std::string joined;
						for (const auto &s : specs) {
							best = std::min(best, in.test_ranks.at(id).at(s));
							if (!joined.empty()) joined += ';';
							joined += s;
						}
						out << id << ',' << specs.size() << ',' << format_double(best) << ',' << csv_field(joined) << '\n';
					}
					const auto p = evaluate_selection(in.test_ranks, chosen);
					std::cout << "K " << k << ": N = " << format_double(p.n) << ", R = " << format_double(p.r) << '\n';
				}
			}
		} else if (*insp) {
			inspect(resolve_config(g, true), dataset_id, std::cout);
		}
	} catch (const std::exception &e) {
		std::cerr << "error: " << e.what() << '\n';
		return 1;
	}
	return 0;
}
