#include "catch_amalgamated.hpp"

#include "tsensemble/harness.hpp"

#include <fstream>
#include <sstream>

using namespace tsens;

namespace {

struct TempDir {
	fs::path path;
	explicit TempDir(const std::string &tag) {
		path = fs::temp_directory_path() / ("tsens_" + tag + "_" + std::to_string(derive_seed(Rng(std::random_device{}()).next(), tag)));
		fs::remove_all(path);
		fs::create_directories(path);
	}
	~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path &p) {
	std::ifstream in(p, std::ios::binary);
	return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path &p, const std::string &text) {
	std::ofstream out(p, std::ios::binary);
	out << text;
}

ErrorCode code_of(const std::function<void()> &f) {
	try {
		f();
	} catch (const Error &e) {
		return e.code();
	}
	FAIL("expected an Error");
	return ErrorCode::InvalidArgument;
}

ResultRecord rec(std::string d, std::string a, double e, std::string source = "other") {
	ResultRecord r;
	r.dataset_id = std::move(d);
	r.algorithm_id = std::move(a);
	r.smape = e;
	r.source = std::move(source);
	return r;
}

std::string daily_csv(int rows, bool gap = false) {
	std::ostringstream out;
	out << "timestamp,target\n";
	for (int i = 0; i < rows; ++i) {
		out << "2021-03-" << (i + 1 < 10 ? "0" : "") << i + 1 << ',';
		if (!(gap && i == 4)) out << 10 + i % 3;
		out << '\n';
	}
	return out.str();
}

RunConfig small_config(const fs::path &out, int count, std::vector<std::string> grid) {
	RunConfig c = default_config();
	c.synthetic = SyntheticCorpusSpec{count, 5, 60, 90};
	c.pool = {BaseModel::naive, BaseModel::snaive, BaseModel::meanf, BaseModel::theta};
	c.grid = std::move(grid);
	c.out = out;
	c.meta.random_reps = 5;
	return c;
}

const std::vector<std::string> kSmallGrid{"mean_average|sel=all",
                                          "mean_average|sel=best",
                                          "combine_detwe(formula=inv)|sel=all",
                                          "ensemble_model_selection(sort=true)|sel=all",
                                          "ensemble_stacking(meta=linreg)|sel=all",
                                          "recent_ensemble(P=20,lambda=50)|sel=all"};

} // namespace

TEST_CASE("ingest examples", "[harness]") {
	std::istringstream ten(daily_csv(10));
	const auto one = read_series_csv(ten, "s");
	REQUIRE(one.size() == 1);
	CHECK(one[0].size() == 10);
	CHECK(one[0].id() == "s");

	std::istringstream gap(daily_csv(10, true));
	try {
		read_series_csv(gap, "s");
		FAIL("missing target accepted");
	} catch (const Error &e) {
		CHECK(e.code() == ErrorCode::SchemaError);
		CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("row"));
	}

	std::istringstream exo("timestamp,target,price,promo,colour\n"
	                       "2021-01-01,1,2.5,0,red\n"
	                       "2021-01-02,2,2.75,1,blue\n"
	                       "2021-01-03,3,3,0,red\n");
	const auto s = read_series_csv(exo, "e").at(0);
	REQUIRE(s.exogenous().size() == 3);
	CHECK(s.exogenous()[0].kind == ColumnKind::numeric);
	CHECK(s.exogenous()[1].kind == ColumnKind::boolean);
	CHECK(s.exogenous()[2].kind == ColumnKind::categorical);
	CHECK(s.exogenous()[2].levels == std::vector<std::string>{"blue", "red"});

	std::istringstream longfmt("series_id,target\na,1\nb,5\na,2\nb,6\na,3\n");
	const auto two = read_series_csv(longfmt, "x");
	REQUIRE(two.size() == 2);
	CHECK(two[0].id() == "a");
	CHECK(two[0].size() == 3);
	CHECK(two[1].target()[1] == 6.0);

	std::istringstream no_target("timestamp,value\n2021-01-01,1\n");
	CHECK(code_of([&] { read_series_csv(no_target, "x"); }) == ErrorCode::SchemaError);
}

TEST_CASE("manifest and directory ingest", "[harness]") {
	TempDir dir("ingest");
	fs::create_directories(dir.path / "series");
	spit(dir.path / "series" / "b.csv", daily_csv(12));
	spit(dir.path / "series" / "a.csv", daily_csv(9));
	const auto from_dir = ingest(dir.path / "series");
	REQUIRE(from_dir.size() == 2);
	CHECK(from_dir[0].id() == "a");
	CHECK(from_dir[1].size() == 12);

	spit(dir.path / "manifest.csv", "path,source,frequency\nseries/a.csv,m4,7\nseries/b.csv,fred,\n");
	const auto listed = ingest(dir.path / "manifest.csv");
	REQUIRE(listed.size() == 2);
	CHECK(listed[0].source() == "m4");
	CHECK(listed[0].frequency_hint() == std::optional<int>(7));
	CHECK(listed[1].source() == "fred");
}

TEST_CASE("CSV quoting", "[harness]") {
	std::istringstream in("a,b\n\"x,1\",\"say \"\"hi\"\"\"\n# comment\n\"multi\nline\",2\n");
	const auto rows = read_csv(in);
	REQUIRE(rows.size() == 3);
	CHECK(rows[1][0] == "x,1");
	CHECK(rows[1][1] == "say \"hi\"");
	CHECK(rows[2][0] == "multi\nline");
	CHECK(csv_field("a,b") == "\"a,b\"");
	CHECK(csv_field("plain") == "plain");
}

TEST_CASE("config validation", "[harness]") {
	const auto base = nlohmann::json{{"synthetic", {{"count", 3}}}, {"grid", {"mean_average|sel=all"}}};
	const auto c = config_from_json(base);
	CHECK_NOTHROW(c.validate());
	CHECK(c.grid == std::vector<std::string>{"mean_average|sel=all"});
	CHECK(to_json(config_from_json(to_json(c))) == to_json(c));

	auto bad = [&](nlohmann::json patch) {
		auto j = base;
		j.merge_patch(patch);
		return code_of([&] { config_from_json(j).validate(); });
	};
	CHECK(bad({{"colour", "red"}}) == ErrorCode::ConfigError);
	CHECK(bad({{"corpus", "x.csv"}}) == ErrorCode::ConfigError);
	CHECK(bad({{"grid", {"nonsense(x=1)"}}}) == ErrorCode::ConfigError);
	CHECK(bad({{"grid", {"mean_average|sel=all", "mean_average"}}}) == ErrorCode::ConfigError);
	CHECK(bad({{"pool", {"naive", "naive"}}}) == ErrorCode::ConfigError);
	CHECK(bad({{"pool", {"prophet"}}}) == ErrorCode::ConfigError);
	CHECK(bad({{"split", {{"horizon", 0}}}}) == ErrorCode::ConfigError);
	CHECK(bad({{"valid_fraction", 1.5}}) == ErrorCode::ConfigError);
	CHECK(bad({{"jobs", 0}}) == ErrorCode::ConfigError);

	// "default" expands to the full grid.
	CHECK(config_from_json({{"synthetic", nlohmann::json::object()}, {"grid", "default"}}).specs().size() == default_grid().size());
}

TEST_CASE("results store round-trip and truncation", "[harness]") {
	TempDir dir("store");
	const fs::path path = dir.path / "results.csv";
	auto failed = rec("d2", "ensemble_stacking(meta=rf)|sel=all", 0.0, "m3");
	failed.status = RecordStatus::failed;
	failed.message = "SeriesTooShort: \"quoted\", with comma";
	std::vector<ResultRecord> records{rec("d2", "naive", 12.5, "m3"), failed, rec("d1", "meanf", 1.0 / 3.0)};
	assign_ranks(records);
	write_results(path, records);
	const auto back = read_results(path);
	REQUIRE(back.size() == 3);
	CHECK(back[0].dataset_id == "d1");
	CHECK(back[0].smape == 1.0 / 3.0);
	CHECK(back[0].rank == std::optional<double>(1.0));
	CHECK(back[1].status == RecordStatus::failed);
	CHECK(back[1].message == failed.message);
	CHECK(back[2].source == "m3");

	// An interrupted append leaves a partial last line, which is dropped.
	std::string text = slurp(path);
	spit(path, text + "d3,naive,4");
	set_warning_sink([](std::string_view) {});
	CHECK(read_results(path).size() == 3);
	set_warning_sink(nullptr);

	spit(path, text + "d3,naive,4\n" + "d4,naive,1,ok,,other,\n");
	CHECK(code_of([&] { read_results(path); }) == ErrorCode::SchemaError);
	spit(path, "dataset_id,algorithm_id\n");
	CHECK(code_of([&] { read_results(path); }) == ErrorCode::SchemaError);
}

TEST_CASE("experiment runs, resumes and isolates failures", "[harness]") {
	TempDir dir("run");
	auto write_series = [&](const std::string &name, int rows) {
		std::ostringstream csv;
		csv << "target\n";
		Rng rng(1);
		for (int i = 0; i < rows; ++i) csv << format_double(10.0 + rng.normal()) << '\n';
		spit(dir.path / (name + ".csv"), csv.str());
		return dir.path / (name + ".csv");
	};
	RunConfig c = default_config();
	c.synthetic.reset();
	c.corpus = {write_series("s1", 40)};
	c.pool = {BaseModel::naive, BaseModel::meanf};
	c.grid = {"mean_average|sel=all"};
	c.out = dir.path / "one";
	const auto first = run_experiment(c);
	CHECK(first.computed == 3);
	CHECK(read_results(c.out / "results.csv").size() == 3);
	const auto again = run_experiment(c);
	CHECK(again.computed == 0);
	CHECK(again.skipped == 3);

	// A short series cannot feed stacking folds; everything else still scores.
	RunConfig s = c;
	s.out = dir.path / "short";
	s.split = SplitSpec{2, std::nullopt};
	s.grid = {"mean_average|sel=all", "ensemble_stacking(meta=linreg)|sel=all"};
	s.corpus = {write_series("tiny", 7)};
	run_experiment(s);
	const auto recs = read_results(s.out / "results.csv");
	REQUIRE(recs.size() == 4);
	for (const auto &r : recs) {
		INFO(r.algorithm_id << ": " << r.message);
		const bool stacking = r.algorithm_id.starts_with("ensemble_stacking");
		CHECK(r.status == (stacking ? RecordStatus::failed : RecordStatus::ok));
	}
}

TEST_CASE("reports", "[harness]") {
	TempDir dir("report");
	std::vector<ResultRecord> wins;
	for (int d = 0; d < 5; ++d) {
		const auto id = "d" + std::to_string(d);
		wins.push_back(rec(id, "mean_average|sel=all", 1.0));
		wins.push_back(rec(id, "naive", 2.0 + d));
		wins.push_back(rec(id, "meanf", 3.0));
	}
	write_report(wins, ReportKind::wins, dir.path);
	const auto table = read_csv(*std::make_unique<std::ifstream>(dir.path / "wins.csv"));
	REQUIRE(table.size() == 4);
	CHECK(table[1] == std::vector<std::string>{"mean_average|sel=all", "ensemble", "5", "5"});
	CHECK(fs::exists(dir.path / "wins.svg"));

	std::vector<ResultRecord> same;
	for (int d = 0; d < 10; ++d) {
		same.push_back(rec("d" + std::to_string(d), "naive", 4.0));
		same.push_back(rec("d" + std::to_string(d), "meanf", 4.0));
	}
	write_report(same, ReportKind::cd, dir.path);
	std::ifstream cd_in(dir.path / "cd.csv");
	const auto cd_rows = read_csv(cd_in);
	int groups = 0;
	for (const auto &r : cd_rows) groups += r.size() == 4 && r[0] != "group" ? 1 : 0;
	CHECK(groups == 1);

	std::vector<ResultRecord> share;
	for (int d = 0; d < 4; ++d) {
		share.push_back(rec("d" + std::to_string(d), "fforma|sel=all", d < 3 ? 1.0 : 5.0, d % 2 ? "m4" : "m3"));
		share.push_back(rec("d" + std::to_string(d), "theta", 2.0, d % 2 ? "m4" : "m3"));
	}
	const auto ws = ensemble_win_share(rank_results(share));
	CHECK(ws.ensemble_wins == 3);
	CHECK(ws.base_wins == 1);
	CHECK(ws.share == 0.75);
	write_report(share, ReportKind::per_source, dir.path);
	std::ifstream ps(dir.path / "per_source.csv");
	CHECK(read_csv(ps).size() == 5);
	CHECK(write_report(share, ReportKind::ranks, dir.path) == std::vector<fs::path>{dir.path / "ranks.csv"});

	CHECK(code_of([&] { write_report({}, ReportKind::ranks, dir.path); }) == ErrorCode::EmptyStore);
	CHECK(parse_report_kind("per-source") == ReportKind::per_source);
	CHECK(is_base_model("stlmar"));
	CHECK_FALSE(is_base_model("mean_average|sel=all"));
}

TEST_CASE("meta partition", "[harness]") {
	std::vector<std::string> ids;
	for (int i = 0; i < 53; ++i) ids.push_back("s" + std::to_string(i));
	const auto p = partition_datasets(ids, 0.2, 9);
	CHECK(p.test.size() == 11);
	CHECK(p.train.size() == 42);
	std::vector<std::string> both = p.train;
	both.insert(both.end(), p.test.begin(), p.test.end());
	std::sort(both.begin(), both.end());
	std::sort(ids.begin(), ids.end());
	CHECK(both == ids);
	std::reverse(ids.begin(), ids.end());
	CHECK(partition_datasets(ids, 0.2, 9).test == p.test);
	CHECK(partition_datasets(ids, 0.2, 10).test != p.test);
}

TEST_CASE("pipeline is deterministic, resumable and sweeps K", "[harness]") {
	TempDir dir("pipeline");
	RunConfig a = small_config(dir.path / "a", 40, kSmallGrid);
	a.meta.k_max = 5;
	RunConfig b = a;
	b.out = dir.path / "b";
	b.jobs = 2;
	run_experiment(a);
	run_experiment(b);
	for (const char *f : {"results.csv", "features.csv"}) {
		INFO(f);
		CHECK(slurp(a.out / f) == slurp(b.out / f));
	}

	const auto sweep = meta_eval(a);
	std::map<std::string, int> per_strategy;
	for (const auto &row : sweep.curve) ++per_strategy[row.strategy];
	CHECK(per_strategy == std::map<std::string, int>{{"autorank", 5}, {"meta", 5}, {"random", 5}});
	CHECK(sweep.full_grid_r == 1.0);
	meta_eval(b);
	for (const char *f : {"meta_curve.csv", "meta_diff.csv", "feature_usage.csv"}) {
		INFO(f);
		CHECK(slurp(a.out / f) == slurp(b.out / f));
	}

	// K equal to the grid size labels everything 1, so the meta-learner keeps
	// the whole grid and reaches rank 1.
	RunConfig sat = a;
	sat.meta.k_max = static_cast<int>(kSmallGrid.size() + a.pool.size());
	const auto full = meta_eval(sat);
	CHECK(full.curve[full.curve.size() - 3].r == 1.0);

	// Interrupt: keep a prefix of the store with a cut-off final line.
	RunConfig r = a;
	r.out = dir.path / "resumed";
	fs::create_directories(r.out);
	const std::string store = slurp(a.out / "results.csv");
	std::size_t cut = store.size() / 2;
	while (store[cut] != '\n') ++cut;
	spit(r.out / "results.csv", store.substr(0, cut + 1) + store.substr(cut + 1, 7));
	const auto summary = run_experiment(r);
	CHECK(summary.skipped > 0);
	CHECK(summary.computed > 0);
	CHECK(slurp(r.out / "results.csv") == slurp(a.out / "results.csv"));
	CHECK(slurp(r.out / "features.csv") == slurp(a.out / "features.csv"));

	std::ostringstream shown;
	inspect(a, "syn0001", shown);
	CHECK_THAT(shown.str(), Catch::Matchers::ContainsSubstring("id: syn0001"));
	CHECK(code_of([&] { inspect(a, "missing", shown); }) == ErrorCode::UnknownName);
}
