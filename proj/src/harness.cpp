#include "tsensemble/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace tsens {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
	return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::optional<double> parse_number(std::string_view s) {
	while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
	while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
	if (s.empty()) return std::nullopt;
	if (s.front() == '+') s.remove_prefix(1);
	double v = 0.0;
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
	if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
	return v;
}

bool is_missing(std::string_view s) {
	return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

std::string read_file(const fs::path &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw Error(ErrorCode::Io, "cannot open " + path.string());
	}
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void write_file(const fs::path &path, const std::string &content) {
	if (path.has_parent_path()) fs::create_directories(path.parent_path());
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out) {
		throw Error(ErrorCode::Io, "cannot write " + path.string());
	}
	out << content;
}

std::string safe_file_name(const std::string &id) {
	std::string out;
	for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
	return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Config

RunConfig default_config() {
	RunConfig c;
	for (const auto &s : default_grid()) c.grid.push_back(s.canonical());
	return c;
}

void RunConfig::validate() const {
	const int sources = (corpus.empty() ? 0 : 1) + (manifest ? 1 : 0) + (synthetic ? 1 : 0);
	if (sources != 1) {
		throw Error(ErrorCode::ConfigError, "exactly one of corpus, manifest or synthetic must be given");
	}
	if (synthetic && (synthetic->count < 1 || synthetic->min_length < 16 || synthetic->max_length < synthetic->min_length)) {
		throw Error(ErrorCode::ConfigError, "synthetic corpus needs count >= 1 and 16 <= min_length <= max_length");
	}
	if (split.horizon.has_value() == split.train_fraction.has_value()) {
		throw Error(ErrorCode::ConfigError, "split needs exactly one of horizon or train_fraction");
	}
	if (split.horizon && *split.horizon < 1) {
		throw Error(ErrorCode::ConfigError, "split.horizon must be at least 1");
	}
	if (split.train_fraction && !(*split.train_fraction > 0.0 && *split.train_fraction < 1.0)) {
		throw Error(ErrorCode::ConfigError, "split.train_fraction must lie in (0, 1)");
	}
	if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
		throw Error(ErrorCode::ConfigError, "valid_fraction must lie in (0, 1)");
	}
	if (pool.empty()) {
		throw Error(ErrorCode::ConfigError, "the base pool is empty");
	}
	if (std::set<BaseModel>(pool.begin(), pool.end()).size() != pool.size()) {
		throw Error(ErrorCode::ConfigError, "the base pool lists a model twice");
	}
	std::set<std::string> seen;
	for (const auto &g : grid) {
		std::string canonical;
		try {
			canonical = parse_spec(g).canonical();
		} catch (const Error &e) {
			throw Error(ErrorCode::ConfigError, "grid entry '" + g + "': " + e.what());
		}
		if (!seen.insert(canonical).second) {
			throw Error(ErrorCode::ConfigError, "grid lists " + canonical + " twice");
		}
	}
	if (jobs < 1) {
		throw Error(ErrorCode::ConfigError, "jobs must be at least 1");
	}
	if (out.empty()) {
		throw Error(ErrorCode::ConfigError, "out must not be empty");
	}
	if (meta.k_max < 1 || !(meta.test_fraction > 0.0 && meta.test_fraction < 1.0) || meta.random_reps < 1) {
		throw Error(ErrorCode::ConfigError, "meta needs k_max >= 1, test_fraction in (0, 1) and random_reps >= 1");
	}
}

std::vector<EnsembleSpec> RunConfig::specs() const {
	std::vector<EnsembleSpec> out;
	for (const auto &g : grid) out.push_back(parse_spec(g));
	return out;
}

RunConfig config_from_json(const nlohmann::json &j, const fs::path &base_dir) {
	static const std::set<std::string> known{"corpus", "manifest", "synthetic", "split", "valid_fraction", "pool",
	                                         "grid", "seed", "jobs", "out", "holidays", "meta"};
	if (!j.is_object()) {
		throw Error(ErrorCode::ConfigError, "config must be a JSON object");
	}
	for (const auto &[key, _] : j.items()) {
		if (!known.contains(key)) {
			throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
		}
	}
	auto resolve = [&](const std::string &p) {
		fs::path path(p);
		return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
	};
	RunConfig c = default_config();
	try {
		if (j.contains("corpus")) {
			const auto &v = j["corpus"];
			if (v.is_string()) {
				c.corpus.push_back(resolve(v.get<std::string>()));
			} else {
				for (const auto &p : v) c.corpus.push_back(resolve(p.get<std::string>()));
			}
		}
		if (j.contains("manifest")) c.manifest = resolve(j["manifest"].get<std::string>());
		if (j.contains("synthetic")) {
			SyntheticCorpusSpec s;
			const auto &v = j["synthetic"];
			s.count = v.value("count", s.count);
			s.seed = v.value("seed", s.seed);
			s.min_length = v.value("min_length", s.min_length);
			s.max_length = v.value("max_length", s.max_length);
			c.synthetic = s;
		}
		if (j.contains("split")) {
			const auto &v = j["split"];
			c.split = {};
			if (v.contains("horizon")) c.split.horizon = v["horizon"].get<Index>();
			if (v.contains("train_fraction")) c.split.train_fraction = v["train_fraction"].get<double>();
		}
		c.valid_fraction = j.value("valid_fraction", c.valid_fraction);
		if (j.contains("pool")) {
			c.pool.clear();
			for (const auto &m : j["pool"]) {
				const auto name = m.get<std::string>();
				auto model = parse_base_model(name);
				if (!model) {
					throw Error(ErrorCode::ConfigError, "unknown base model '" + name + "'");
				}
				c.pool.push_back(*model);
			}
		}
		if (j.contains("grid")) {
			const auto &v = j["grid"];
			if (!(v.is_string() && v.get<std::string>() == "default")) {
				c.grid.clear();
				for (const auto &s : v) {
					const auto text = s.get<std::string>();
					try {
						c.grid.push_back(parse_spec(text).canonical());
					} catch (const Error &e) {
						throw Error(ErrorCode::ConfigError, "grid entry '" + text + "': " + e.what());
					}
				}
			}
		}
		c.seed = j.value("seed", c.seed);
		c.jobs = j.value("jobs", c.jobs);
		if (j.contains("out")) c.out = resolve(j["out"].get<std::string>());
		if (j.contains("holidays")) c.holidays = resolve(j["holidays"].get<std::string>());
		if (j.contains("meta")) {
			const auto &v = j["meta"];
			c.meta.k_max = v.value("k_max", c.meta.k_max);
			c.meta.test_fraction = v.value("test_fraction", c.meta.test_fraction);
			c.meta.random_reps = v.value("random_reps", c.meta.random_reps);
		}
	} catch (const nlohmann::json::exception &e) {
		throw Error(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
	}
	c.validate();
	return c;
}

RunConfig load_config(const fs::path &path) {
	nlohmann::json j;
	try {
		j = nlohmann::json::parse(read_file(path));
	} catch (const nlohmann::json::parse_error &e) {
		throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
	}
	return config_from_json(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig &c) {
	nlohmann::json j;
	if (!c.corpus.empty()) {
		auto paths = nlohmann::json::array();
		for (const auto &p : c.corpus) paths.push_back(p.string());
		j["corpus"] = paths;
	}
	if (c.manifest) j["manifest"] = c.manifest->string();
	if (c.synthetic) {
		j["synthetic"] = {{"count", c.synthetic->count}, {"seed", c.synthetic->seed},
		                  {"min_length", c.synthetic->min_length}, {"max_length", c.synthetic->max_length}};
	}
	if (c.split.horizon) j["split"] = {{"horizon", *c.split.horizon}};
	if (c.split.train_fraction) j["split"] = {{"train_fraction", *c.split.train_fraction}};
	j["valid_fraction"] = c.valid_fraction;
	auto pool = nlohmann::json::array();
	for (auto m : c.pool) pool.push_back(std::string(to_string(m)));
	j["pool"] = pool;
	j["grid"] = c.grid;
	j["seed"] = c.seed;
	j["jobs"] = c.jobs;
	j["out"] = c.out.string();
	if (c.holidays) j["holidays"] = c.holidays->string();
	j["meta"] = {{"k_max", c.meta.k_max}, {"test_fraction", c.meta.test_fraction}, {"random_reps", c.meta.random_reps}};
	return j;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> read_csv(std::istream &in) {
	std::vector<std::vector<std::string>> rows;
	std::vector<std::string> row;
	std::string field;
	bool quoted = false;
	bool any = false;
	bool comment = false;
	char c = 0;
	auto end_row = [&] {
		if (any || !field.empty() || !row.empty()) {
			row.push_back(std::move(field));
			rows.push_back(std::move(row));
		}
		row.clear();
		field.clear();
		any = false;
	};
	while (in.get(c)) {
		if (comment) {
			if (c == '\n') comment = false;
			continue;
		}
		if (quoted) {
			if (c == '"') {
				if (in.peek() == '"') {
					in.get(c);
					field.push_back('"');
				} else {
					quoted = false;
				}
			} else {
				field.push_back(c);
			}
			continue;
		}
		switch (c) {
		case '"': quoted = true; any = true; break;
		case ',': row.push_back(std::move(field)); field.clear(); any = true; break;
		case '\r': break;
		case '\n': end_row(); break;
		case '#':
			if (!any && field.empty() && row.empty()) {
				comment = true;
				break;
			}
			[[fallthrough]];
		default: field.push_back(c); any = true;
		}
	}
	end_row();
	return rows;
}

std::string csv_field(std::string_view text) {
	if (text.find_first_of(",\"\n\r") == std::string_view::npos && (text.empty() || text.front() != '#')) {
		return std::string(text);
	}
	std::string out = "\"";
	for (char c : text) {
		if (c == '"') out.push_back('"');
		out.push_back(c);
	}
	out.push_back('"');
	return out;
}

std::string format_double(double v) {
	if (std::isnan(v)) return "nan";
	if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
	char buf[40];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

// ---------------------------------------------------------------------------
// Ingest

namespace {

ExoColumn infer_column(const std::string &name, const std::vector<std::string> &cells) {
	ExoColumn col;
	col.name = name;
	const auto n = static_cast<Index>(cells.size());
	col.values.resize(n);
	std::set<std::string> distinct(cells.begin(), cells.end());
	auto lower = [](std::string s) {
		std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
		return s;
	};
	const bool boolean_words = std::all_of(distinct.begin(), distinct.end(), [&](const std::string &s) {
		const auto l = lower(s);
		return l == "true" || l == "false";
	});
	const bool zero_one = std::all_of(distinct.begin(), distinct.end(), [](const std::string &s) {
		auto v = parse_number(s);
		return v && (*v == 0.0 || *v == 1.0);
	});
	if (boolean_words || zero_one) {
		col.kind = ColumnKind::boolean;
		for (Index i = 0; i < n; ++i) {
			const auto &s = cells[static_cast<std::size_t>(i)];
			col.values[i] = boolean_words ? (lower(s) == "true" ? 1.0 : 0.0) : *parse_number(s);
		}
		return col;
	}
	bool numeric = true;
	for (Index i = 0; i < n && numeric; ++i) {
		auto v = parse_number(cells[static_cast<std::size_t>(i)]);
		if (v) {
			col.values[i] = *v;
		} else {
			numeric = false;
		}
	}
	if (numeric) {
		col.kind = ColumnKind::numeric;
		return col;
	}
	col.kind = ColumnKind::categorical;
	col.levels.assign(distinct.begin(), distinct.end());
	for (Index i = 0; i < n; ++i) {
		const auto it = std::lower_bound(col.levels.begin(), col.levels.end(), cells[static_cast<std::size_t>(i)]);
		col.values[i] = static_cast<double>(it - col.levels.begin());
	}
	return col;
}

} // namespace

std::vector<TimeSeries> read_series_csv(std::istream &in, const std::string &default_id, const std::string &source,
                                        std::optional<int> frequency) {
	const auto rows = read_csv(in);
	if (rows.empty()) {
		throw Error(ErrorCode::SchemaError, default_id + ": empty file");
	}
	const auto &header = rows.front();
	std::optional<std::size_t> ts_col;
	std::optional<std::size_t> target_col;
	std::optional<std::size_t> id_col;
	std::vector<std::size_t> exo_cols;
	for (std::size_t c = 0; c < header.size(); ++c) {
		if (header[c] == "timestamp") {
			ts_col = c;
		} else if (header[c] == "target") {
			target_col = c;
		} else if (header[c] == "series_id") {
			id_col = c;
		} else if (header[c].empty()) {
			throw Error(ErrorCode::SchemaError, default_id + ": column " + std::to_string(c + 1) + " has an empty name");
		} else {
			exo_cols.push_back(c);
		}
	}
	if (!target_col) {
		throw Error(ErrorCode::SchemaError, default_id + ": no 'target' column");
	}
	// Group rows by series id, keeping first-appearance order.
	std::vector<std::string> order;
	std::map<std::string, std::vector<std::size_t>> groups;
	for (std::size_t r = 1; r < rows.size(); ++r) {
		if (rows[r].size() != header.size()) {
			throw Error(ErrorCode::SchemaError, default_id + ": row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
			                                        " columns, expected " + std::to_string(header.size()));
		}
		const std::string id = id_col ? rows[r][*id_col] : default_id;
		if (id.empty()) {
			throw Error(ErrorCode::SchemaError, default_id + ": row " + std::to_string(r + 1) + ", column series_id: empty id");
		}
		auto [it, fresh] = groups.try_emplace(id);
		if (fresh) order.push_back(id);
		it->second.push_back(r);
	}
	std::vector<TimeSeries> out;
	for (const auto &id : order) {
		const auto &members = groups.at(id);
		const auto n = static_cast<Index>(members.size());
		Vector y(n);
		std::optional<std::vector<Timestamp>> stamps;
		if (ts_col) stamps.emplace();
		std::vector<std::vector<std::string>> exo_cells(exo_cols.size());
		for (Index i = 0; i < n; ++i) {
			const std::size_t r = members[static_cast<std::size_t>(i)];
			const auto &row = rows[r];
			const std::string where = default_id + ": row " + std::to_string(r + 1);
			const auto &t = row[*target_col];
			if (is_missing(t)) {
				throw Error(ErrorCode::SchemaError, where + ", column target: missing value");
			}
			auto v = parse_number(t);
			if (!v || !std::isfinite(*v)) {
				throw Error(ErrorCode::SchemaError, where + ", column target: '" + t + "' is not a number");
			}
			y[i] = *v;
			if (ts_col) {
				try {
					stamps->push_back(parse_timestamp(row[*ts_col]));
				} catch (const Error &e) {
					throw Error(ErrorCode::SchemaError, where + ", column timestamp: " + e.what());
				}
			}
			for (std::size_t e = 0; e < exo_cols.size(); ++e) {
				const auto &cell = row[exo_cols[e]];
				if (is_missing(cell)) {
					throw Error(ErrorCode::SchemaError, where + ", column " + header[exo_cols[e]] + ": missing value");
				}
				exo_cells[e].push_back(cell);
			}
		}
		std::vector<ExoColumn> exo;
		for (std::size_t e = 0; e < exo_cols.size(); ++e) exo.push_back(infer_column(header[exo_cols[e]], exo_cells[e]));
		try {
			out.emplace_back(id, std::move(y), std::move(stamps), std::move(exo), frequency, source);
		} catch (const Error &e) {
			throw Error(ErrorCode::SchemaError, default_id + ": series " + id + ": " + e.what());
		}
	}
	if (out.empty()) {
		throw Error(ErrorCode::SchemaError, default_id + ": no data rows");
	}
	return out;
}

std::vector<TimeSeries> read_series_csv(const fs::path &path, const std::string &source, std::optional<int> frequency) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw Error(ErrorCode::Io, "cannot open " + path.string());
	}
	return read_series_csv(in, path.stem().string(), source, frequency);
}

std::vector<TimeSeries> read_manifest(const fs::path &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw Error(ErrorCode::Io, "cannot open " + path.string());
	}
	const auto rows = read_csv(in);
	if (rows.empty()) {
		throw Error(ErrorCode::SchemaError, path.string() + ": empty manifest");
	}
	const auto &h = rows.front();
	auto col = [&](const std::string &name) -> std::optional<std::size_t> {
		auto it = std::find(h.begin(), h.end(), name);
		if (it == h.end()) return std::nullopt;
		return static_cast<std::size_t>(it - h.begin());
	};
	const auto path_col = col("path");
	const auto source_col = col("source");
	const auto freq_col = col("frequency");
	if (!path_col || !source_col) {
		throw Error(ErrorCode::SchemaError, path.string() + ": manifest needs 'path' and 'source' columns");
	}
	static const std::set<std::string> sources{"m3", "m4", "m5", "fred", "other"};
	std::vector<TimeSeries> out;
	for (std::size_t r = 1; r < rows.size(); ++r) {
		const auto &row = rows[r];
		const std::string where = path.string() + ": row " + std::to_string(r + 1);
		if (row.size() != h.size()) {
			throw Error(ErrorCode::SchemaError, where + ": wrong number of columns");
		}
		const auto &source = row[*source_col];
		if (!sources.contains(source)) {
			throw Error(ErrorCode::SchemaError, where + ", column source: unknown source '" + source + "'");
		}
		std::optional<int> freq;
		if (freq_col && !row[*freq_col].empty()) {
			auto v = parse_number(row[*freq_col]);
			if (!v || *v < 1 || *v != std::floor(*v)) {
				throw Error(ErrorCode::SchemaError, where + ", column frequency: not a positive integer");
			}
			freq = static_cast<int>(*v);
		}
		fs::path file(row[*path_col]);
		if (file.is_relative()) file = path.parent_path() / file;
		for (auto &s : read_series_csv(file, source, freq)) out.push_back(std::move(s));
	}
	return out;
}

std::vector<TimeSeries> ingest(const fs::path &path) {
	if (fs::is_directory(path)) {
		std::vector<fs::path> files;
		for (const auto &e : fs::directory_iterator(path)) {
			if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
		}
		std::sort(files.begin(), files.end());
		std::vector<TimeSeries> out;
		for (const auto &f : files) {
			for (auto &s : ingest(f)) out.push_back(std::move(s));
		}
		return out;
	}
	if (path.filename().string().find("manifest") != std::string::npos) {
		return read_manifest(path);
	}
	return read_series_csv(path);
}

std::vector<TimeSeries> load_corpus(const RunConfig &config) {
	std::vector<TimeSeries> out;
	if (config.synthetic) {
		out = synthetic_corpus(*config.synthetic);
	} else if (config.manifest) {
		out = read_manifest(*config.manifest);
	} else {
		for (const auto &p : config.corpus) {
			for (auto &s : ingest(p)) out.push_back(std::move(s));
		}
	}
	std::set<std::string> ids;
	for (const auto &s : out) {
		if (!ids.insert(s.id()).second) {
			throw Error(ErrorCode::ConfigError, "series id '" + s.id() + "' appears twice in the corpus");
		}
	}
	return out;
}

// ---------------------------------------------------------------------------
// Results store

namespace {

constexpr std::string_view kResultColumns = "dataset_id,algorithm_id,smape,status,rank,source,message";

ResultRecord parse_record(const std::vector<std::string> &row) {
	if (row.size() != 7) {
		throw Error(ErrorCode::SchemaError, "expected 7 fields, got " + std::to_string(row.size()));
	}
	ResultRecord r;
	r.dataset_id = row[0];
	r.algorithm_id = row[1];
	r.status = parse_status(row[3]);
	if (r.status == RecordStatus::ok) {
		auto v = parse_number(row[2]);
		if (!v || *v < 0.0) {
			throw Error(ErrorCode::SchemaError, "record " + r.dataset_id + "/" + r.algorithm_id + " has no valid smape");
		}
		r.smape = *v;
	} else {
		r.smape = std::numeric_limits<double>::quiet_NaN();
	}
	if (!row[4].empty()) r.rank = parse_number(row[4]);
	r.source = row[5];
	r.message = row[6];
	return r;
}

} // namespace

std::vector<ResultRecord> read_results(const fs::path &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw Error(ErrorCode::Io, "cannot open " + path.string());
	}
	std::string first;
	std::getline(in, first);
	if (!first.empty() && first.back() == '\r') first.pop_back();
	if (first != kResultsHeader) {
		throw Error(ErrorCode::SchemaError, path.string() + ": not a results store (header '" + first + "')");
	}
	const auto rows = read_csv(in);
	std::vector<ResultRecord> out;
	for (std::size_t i = 0; i < rows.size(); ++i) {
		if (i == 0) {
			if (rows[0].size() != 7 || rows[0][0] != "dataset_id") {
				throw Error(ErrorCode::SchemaError, path.string() + ": unexpected column header");
			}
			continue;
		}
		try {
			out.push_back(parse_record(rows[i]));
		} catch (const Error &e) {
			if (i + 1 == rows.size()) {
				warn(path.string() + ": ignoring truncated last record");
				break;
			}
			throw Error(ErrorCode::SchemaError, path.string() + ": record " + std::to_string(i) + ": " + e.what());
		}
	}
	return out;
}

void write_result_lines(std::ostream &out, const std::vector<ResultRecord> &records) {
	for (const auto &r : records) {
		out << csv_field(r.dataset_id) << ',' << csv_field(r.algorithm_id) << ','
		    << (r.status == RecordStatus::ok ? format_double(r.smape) : std::string()) << ',' << to_string(r.status) << ','
		    << (r.rank ? format_double(*r.rank) : std::string()) << ',' << csv_field(r.source) << ',' << csv_field(r.message)
		    << '\n';
	}
}

void write_results(const fs::path &path, std::vector<ResultRecord> records) {
	std::sort(records.begin(), records.end(), [](const ResultRecord &a, const ResultRecord &b) {
		return std::tie(a.dataset_id, a.algorithm_id) < std::tie(b.dataset_id, b.algorithm_id);
	});
	std::ostringstream ss;
	ss << kResultsHeader << '\n' << kResultColumns << '\n';
	write_result_lines(ss, records);
	const auto tmp = fs::path(path.string() + ".tmp");
	write_file(tmp, ss.str());
	fs::rename(tmp, path);
}

void assign_ranks(std::vector<ResultRecord> &records) {
	const auto table = rank_results(records);
	for (auto &r : records) {
		r.rank.reset();
		if (r.status != RecordStatus::ok) continue;
		const double v = table.rank(r.dataset_id, r.algorithm_id);
		if (std::isfinite(v)) r.rank = v;
	}
}

// ---------------------------------------------------------------------------
// Experiment

ExogenousFrame build_exogenous_frame(const TimeSeries &full, const SeasonalityInfo &seasonality, const HolidaySet *holidays) {
	const Index rows = full.size();
	std::vector<std::string> names;
	std::vector<Vector> cols;
	for (const auto &e : full.exogenous()) {
		names.push_back(e.name);
		cols.push_back(e.values);
	}
	if (full.timestamps() && full.size() >= 2) {
		const auto cal = extract_calendar(full, holidays);
		for (std::size_t c = 0; c < cal.names.size(); ++c) {
			names.push_back(cal.names[c]);
			cols.push_back(cal.columns.col(static_cast<Index>(c)));
		}
	}
	std::vector<std::string> fourier_names;
	const Matrix fourier = seasonal_fourier_features(seasonality, 0, rows, &fourier_names);
	for (Index c = 0; c < fourier.cols(); ++c) {
		names.push_back(fourier_names[static_cast<std::size_t>(c)]);
		cols.push_back(fourier.col(c));
	}
	ExogenousFrame frame;
	frame.names = std::move(names);
	frame.values.resize(rows, static_cast<Index>(cols.size()));
	for (std::size_t c = 0; c < cols.size(); ++c) frame.values.col(static_cast<Index>(c)) = cols[c];
	return frame;
}

namespace {

struct Timing {
	std::string dataset_id;
	std::string algorithm_id;
	double runtime_ms = 0.0;
};

/// What the corpus-level FFORMA pass needs from one series.
struct FformaRow {
	std::string id;
	std::string source;
	Eigen::RowVectorXd features;
	Vector errors;
	ForecastMatrix test;
	Vector actual;
};

struct SeriesOutcome {
	std::vector<ResultRecord> records;
	std::vector<Timing> timings;
	std::optional<MetaFeatureVector> features;
	std::optional<FformaRow> fforma;
};

ResultRecord make_record(const TimeSeries &s, const std::string &algorithm) {
	ResultRecord r;
	r.dataset_id = s.id();
	r.algorithm_id = algorithm;
	r.source = s.source();
	return r;
}

void score_into(ResultRecord &r, const Vector &actual, const Vector &forecast) {
	if (forecast.size() != actual.size() || !forecast.allFinite()) {
		r.status = RecordStatus::failed;
		r.message = "forecast is not finite or has the wrong length";
		return;
	}
	auto v = try_smape(actual, forecast);
	if (!v) {
		r.status = RecordStatus::excluded;
		r.message = "zero denominator";
		return;
	}
	r.smape = *v;
	r.status = RecordStatus::ok;
}

void fail_into(ResultRecord &r, const std::exception &e) {
	const auto *err = dynamic_cast<const Error *>(&e);
	r.status = err && err->code() == ErrorCode::ZeroDenominator ? RecordStatus::excluded : RecordStatus::failed;
	r.message = e.what();
}

struct RunContext {
	const RunConfig &config;
	std::vector<EnsembleSpec> specs;
	std::vector<std::string> spec_ids;
	std::optional<HolidaySet> holidays;
	std::set<std::pair<std::string, std::string>> existing;
	std::map<std::string, MetaFeatureVector> old_features;
	bool need_fforma = false;
};

SeriesOutcome process_series(const TimeSeries &full, const RunContext &ctx) {
	SeriesOutcome out;
	const auto &config = ctx.config;
	const auto &id = full.id();
	auto missing = [&](const std::string &algo) { return !ctx.existing.contains({id, algo}); };
	std::vector<std::string> base_ids;
	for (auto m : config.pool) base_ids.emplace_back(to_string(m));
	const bool any_missing = std::any_of(base_ids.begin(), base_ids.end(), missing) ||
	                         std::any_of(ctx.spec_ids.begin(), ctx.spec_ids.end(), missing);
	const fs::path pool_path = config.out / "pools" / (safe_file_name(id) + ".json");
	const bool have_features = ctx.old_features.contains(id);
	// features.csv is only written at the end of a run, so series completed
	// before an interruption are refitted to recover their meta-features.
	if (!any_missing && have_features && !(ctx.need_fforma && !fs::exists(pool_path))) {
		if (ctx.need_fforma) {
			// Complete series still contribute to corpus-level FFORMA training.
			auto pool = deserialize_pool(read_file(pool_path));
			const auto tt = split(full, config.split);
			out.fforma = FformaRow{id, full.source(), ctx.old_features.at(id).values, pool.training_errors(), pool.test,
			                       tt.test.target()};
		}
		return out;
	}
	auto fail_all = [&](const std::exception &e) {
		for (const auto &a : base_ids) {
			if (!missing(a)) continue;
			auto r = make_record(full, a);
			fail_into(r, e);
			out.records.push_back(std::move(r));
		}
		for (const auto &a : ctx.spec_ids) {
			if (!missing(a)) continue;
			auto r = make_record(full, a);
			fail_into(r, e);
			out.records.push_back(std::move(r));
		}
	};

	TrainTest tt;
	SeasonalityInfo info;
	PoolFit fit;
	const auto t_fit = Clock::now();
	try {
		tt = split(full, config.split);
		const Vector &y = tt.train.target();
		info = detect_seasonality(y);
		const auto es = ensemble_split(y.size(), config.valid_fraction, info.primary_period);
		fit = fit_all(config.pool, y, es, info, tt.test.size());
	} catch (const std::exception &e) {
		fail_all(e);
		return out;
	}
	const double fit_ms = elapsed_ms(t_fit) / static_cast<double>(config.pool.size());
	write_file(pool_path, serialize_pool(fit));
	const Vector actual = tt.test.target();

	for (std::size_t b = 0; b < base_ids.size(); ++b) {
		if (!missing(base_ids[b])) continue;
		auto r = make_record(full, base_ids[b]);
		if (auto row = fit.test.find(base_ids[b])) {
			score_into(r, actual, fit.test.values.row(*row).transpose());
		} else {
			r.status = RecordStatus::failed;
			r.message = "dropped from the pool";
		}
		out.records.push_back(std::move(r));
		out.timings.push_back({id, base_ids[b], fit_ms});
	}

	try {
		out.features = extract_features(tt.train, info);
	} catch (const std::exception &e) {
		warn(id + ": no meta-features: " + e.what());
	}
	if (out.features && static_cast<std::size_t>(fit.size()) == config.pool.size()) {
		out.fforma = FformaRow{id, full.source(), out.features->values, fit.training_errors(), fit.test, actual};
	}

	std::optional<ExogenousFrame> exo;
	try {
		exo = build_exogenous_frame(full, info, ctx.holidays ? &*ctx.holidays : nullptr);
	} catch (const std::exception &e) {
		warn(id + ": no exogenous frame: " + e.what());
	}
	EnsembleContext ectx(config.pool, tt.train.target(), std::move(fit), exo ? &*exo : nullptr,
	                     derive_seed(config.seed, "series/" + id));
	for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
		const auto &spec = ctx.specs[s];
		const auto &sid = ctx.spec_ids[s];
		if (spec.method == EnsembleMethod::fforma || !missing(sid)) continue;
		auto r = make_record(full, sid);
		const auto t0 = Clock::now();
		try {
			score_into(r, actual, run_ensemble(spec, ectx).forecast);
		} catch (const std::exception &e) {
			fail_into(r, e);
		}
		out.timings.push_back({id, sid, elapsed_ms(t0)});
		out.records.push_back(std::move(r));
	}
	return out;
}

void append_timings(const fs::path &path, const std::vector<Timing> &timings) {
	const bool fresh = !fs::exists(path);
	std::ofstream out(path, std::ios::app);
	if (fresh) out << "dataset_id,algorithm_id,runtime_ms\n";
	for (const auto &t : timings) {
		out << csv_field(t.dataset_id) << ',' << csv_field(t.algorithm_id) << ',' << format_double(t.runtime_ms) << '\n';
	}
}

} // namespace

RunSummary run_experiment(const RunConfig &config) {
	config.validate();
	return run_experiment(config, load_corpus(config));
}

RunSummary run_experiment(const RunConfig &config, const std::vector<TimeSeries> &corpus) {
	config.validate();
	fs::create_directories(config.out / "pools");
	write_file(config.out / "config.json", to_json(config).dump(2) + "\n");
	std::ofstream warnings(config.out / "warnings.log", std::ios::app);
	set_warning_sink([&warnings](std::string_view m) { warnings << m << '\n'; });
	struct SinkReset {
		~SinkReset() { set_warning_sink(nullptr); }
	} sink_reset;

	RunContext ctx{config, config.specs(), {}, std::nullopt, {}, {}, false};
	for (const auto &s : ctx.specs) ctx.spec_ids.push_back(s.canonical());
	if (config.holidays) ctx.holidays = read_holidays(*config.holidays);

	const fs::path results_path = config.out / "results.csv";
	std::vector<ResultRecord> records;
	if (fs::exists(results_path)) records = read_results(results_path);
	for (const auto &r : records) ctx.existing.insert({r.dataset_id, r.algorithm_id});
	const fs::path features_path = config.out / "features.csv";
	if (fs::exists(features_path)) {
		std::ifstream in(features_path);
		ctx.old_features = read_feature_csv(in);
	}
	std::vector<std::string> fforma_ids;
	for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
		if (ctx.specs[s].method == EnsembleMethod::fforma) fforma_ids.push_back(ctx.spec_ids[s]);
	}
	for (const auto &s : corpus) {
		for (const auto &f : fforma_ids) {
			if (!ctx.existing.contains({s.id(), f})) ctx.need_fforma = true;
		}
	}

	RunSummary summary;
	summary.series = static_cast<Index>(corpus.size());
	summary.skipped = static_cast<Index>(records.size());

	// Rewrite the store so appends land after a complete header and records,
	// not after a line cut short by an interrupted run.
	write_results(results_path, records);


	std::mutex store_mutex;
	std::vector<std::optional<FformaRow>> fforma_rows(corpus.size());
	std::map<std::string, MetaFeatureVector> features = ctx.old_features;
	std::atomic<std::size_t> next{0};
	auto worker = [&] {
		for (std::size_t i = next++; i < corpus.size(); i = next++) {
			SeriesOutcome o;
			try {
				o = process_series(corpus[i], ctx);
			} catch (const std::exception &e) {
				warn(corpus[i].id() + ": " + e.what());
				continue;
			}
			std::lock_guard lock(store_mutex);
			{
				std::ofstream app(results_path, std::ios::app);
				write_result_lines(app, o.records);
			}
			append_timings(config.out / "timings.csv", o.timings);
			if (o.features) features[corpus[i].id()] = *o.features;
			fforma_rows[i] = std::move(o.fforma);
			for (auto &r : o.records) {
				if (r.status == RecordStatus::failed) ++summary.failed;
				records.push_back(std::move(r));
				++summary.computed;
			}
		}
	};
	const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(corpus.size())));
	if (jobs == 1) {
		worker();
	} else {
		std::vector<std::thread> threads;
		for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
		for (auto &t : threads) t.join();
	}

	if (ctx.need_fforma && !fforma_ids.empty()) {
		std::vector<const FformaRow *> usable;
		for (const auto &r : fforma_rows) {
			if (r) usable.push_back(&*r);
		}
		std::optional<FformaModel> model;
		std::string failure;
		try {
			if (static_cast<Index>(usable.size()) < kFformaMinCorpus) {
				throw Error(ErrorCode::CorpusTooSmall, "fforma needs at least " + std::to_string(kFformaMinCorpus) +
				                                           " series with a complete pool, got " + std::to_string(usable.size()));
			}
			Matrix x(static_cast<Index>(usable.size()), usable.front()->features.size());
			Matrix e(static_cast<Index>(usable.size()), usable.front()->errors.size());
			for (std::size_t i = 0; i < usable.size(); ++i) {
				x.row(static_cast<Index>(i)) = usable[i]->features;
				e.row(static_cast<Index>(i)) = usable[i]->errors.cwiseMin(kFformaErrorCap).transpose();
			}
			model = fforma_train(x, e, usable.front()->test.model_ids, features.begin()->second.names);
			write_file(config.out / "fforma.json", to_json(*model).dump() + "\n");
		} catch (const Error &err) {
			failure = err.what();
		}
		for (std::size_t i = 0; i < corpus.size(); ++i) {
			const auto &s = corpus[i];
			for (const auto &fid : fforma_ids) {
				if (ctx.existing.contains({s.id(), fid})) continue;
				auto r = make_record(s, fid);
				const auto t0 = Clock::now();
				const auto &row = fforma_rows[i];
				if (!model) {
					r.status = RecordStatus::failed;
					r.message = failure;
				} else if (!row) {
					r.status = RecordStatus::failed;
					r.message = "PoolMismatch: incomplete pool or no meta-features";
				} else {
					try {
						const auto spec = parse_spec(fid);
						const auto rows = select_models(row->test.model_ids, row->errors, spec.selection);
						score_into(r, row->actual, fforma_apply(*model, row->features, row->test.subset(rows)).forecast);
					} catch (const std::exception &e) {
						fail_into(r, e);
					}
				}
				{
					std::ofstream app(results_path, std::ios::app);
					write_result_lines(app, {r});
				}
				append_timings(config.out / "timings.csv", {{s.id(), fid, elapsed_ms(t0)}});
				if (r.status == RecordStatus::failed) ++summary.failed;
				records.push_back(std::move(r));
				++summary.computed;
			}
		}
	}
	assign_ranks(records);
	write_results(results_path, std::move(records));
	{
		std::ostringstream ss;
		write_feature_csv(ss, features);
		write_file(features_path, ss.str());
	}
	return summary;
}

// ---------------------------------------------------------------------------
// Meta pipeline

MetaPartition partition_datasets(std::vector<std::string> ids, double test_fraction, std::uint64_t seed) {
	std::sort(ids.begin(), ids.end());
	ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
	std::vector<std::pair<std::uint64_t, std::string>> keyed;
	for (auto &id : ids) keyed.emplace_back(derive_seed(seed, "partition/" + id), std::move(id));
	std::sort(keyed.begin(), keyed.end());
	const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(keyed.size()) - 1e-9));
	MetaPartition p;
	for (std::size_t i = 0; i < keyed.size(); ++i) (i < n_test ? p.test : p.train).push_back(keyed[i].second);
	std::sort(p.train.begin(), p.train.end());
	std::sort(p.test.begin(), p.test.end());
	return p;
}

MetaInputs load_meta_inputs(const RunConfig &config) {
	MetaInputs in;
	in.specs = config.grid;
	const auto records = read_results(config.out / "results.csv");
	if (records.empty()) {
		throw Error(ErrorCode::EmptyStore, "the results store is empty");
	}
	const auto all = spec_ranks(records, in.specs);
	{
		std::ifstream f(config.out / "features.csv");
		if (!f) {
			throw Error(ErrorCode::Io, "no features.csv under " + config.out.string());
		}
		in.features = read_feature_csv(f);
	}
	std::vector<std::string> ids;
	for (const auto &[id, _] : all) ids.push_back(id);
	const auto part = partition_datasets(ids, config.meta.test_fraction, derive_seed(config.seed, "meta-partition"));
	for (const auto &id : part.train) in.train_ranks[id] = all.at(id);
	for (const auto &id : part.test) {
		if (in.train_ranks.contains(id)) {
			throw Error(ErrorCode::InvalidArgument, "dataset " + id + " is in both the training and the test corpus");
		}
		in.test_ranks[id] = all.at(id);
	}
	return in;
}

MetaDataset meta_build(const MetaInputs &in, int k) {
	return build_meta_dataset(in.train_ranks, in.features, in.specs, k);
}

SelectorModel meta_train(const MetaInputs &in, int k, std::uint64_t seed) {
	return train_selectors(meta_build(in, k), in.train_ranks, derive_seed(seed, "meta/k" + std::to_string(k)));
}

std::map<std::string, std::vector<std::string>> meta_select(const MetaInputs &in, const SelectorModel &model) {
	std::map<std::string, std::vector<std::string>> out;
	for (const auto &[id, _] : in.test_ranks) {
		auto it = in.features.find(id);
		if (it == in.features.end()) {
			throw Error(ErrorCode::IncompleteGrid, "dataset " + id + " has no meta-features");
		}
		out[id] = select_specs(model, it->second);
	}
	return out;
}

MetaSweep meta_eval(const RunConfig &config) {
	const auto in = load_meta_inputs(config);
	struct SinkReset {
		~SinkReset() { set_warning_sink(nullptr); }
	} reset;
	MetaSweep sweep;
	std::map<std::string, std::vector<std::string>> full;
	for (const auto &[id, _] : in.test_ranks) full[id] = in.specs;
	sweep.full_grid_r = evaluate_selection(in.test_ranks, full).r;
	const auto mean_ranks = corpus_mean_ranks(in.train_ranks, in.specs);

	std::ostringstream diff;
	diff << "k,n,random_minus_meta,autorank_minus_meta\n";
	for (int k = 1; k <= config.meta.k_max; ++k) {
		const auto model = meta_train(in, k, config.seed);
		if (sweep.feature_usage.empty()) {
			sweep.feature_names = model.feature_names;
			sweep.feature_usage.assign(model.feature_names.size(), 0);
		}
		const auto usage = model.feature_usage();
		for (std::size_t f = 0; f < usage.size(); ++f) sweep.feature_usage[f] += usage[f];

		const auto chosen = meta_select(in, model);
		auto meta_point = evaluate_selection(in.test_ranks, chosen);
		meta_point.k = k;

		std::map<std::string, std::vector<std::string>> autorank;
		for (const auto &[id, sel] : chosen) {
			autorank[id] = baseline_autorank(in.specs, mean_ranks, static_cast<Index>(sel.size()));
		}
		auto auto_point = evaluate_selection(in.test_ranks, autorank);

		MetaEvalPoint random_point;
		for (int rep = 0; rep < config.meta.random_reps; ++rep) {
			std::map<std::string, std::vector<std::string>> random;
			for (const auto &[id, sel] : chosen) {
				Rng rng(derive_seed(config.seed, "random/k" + std::to_string(k) + "/rep" + std::to_string(rep) + "/" + id));
				random[id] = baseline_random(in.specs, static_cast<Index>(sel.size()), rng);
			}
			const auto p = evaluate_selection(in.test_ranks, random);
			random_point.n += p.n;
			random_point.r += p.r;
		}
		random_point.n /= config.meta.random_reps;
		random_point.r /= config.meta.random_reps;

		sweep.curve.push_back({k, "meta", meta_point.n, meta_point.r});
		sweep.curve.push_back({k, "autorank", auto_point.n, auto_point.r});
		sweep.curve.push_back({k, "random", random_point.n, random_point.r});
		diff << k << ',' << format_double(meta_point.n) << ',' << format_double(random_point.r - meta_point.r) << ','
		     << format_double(auto_point.r - meta_point.r) << '\n';
	}

	std::ostringstream curve;
	curve << "k,strategy,n,r\n";
	for (const auto &c : sweep.curve) curve << c.k << ',' << c.strategy << ',' << format_double(c.n) << ',' << format_double(c.r) << '\n';
	curve << "0,full_grid," << in.specs.size() << ',' << format_double(sweep.full_grid_r) << '\n';
	write_file(config.out / "meta_curve.csv", curve.str());
	write_file(config.out / "meta_diff.csv", diff.str());

	std::ostringstream usage;
	usage << "feature,splits\n";
	for (std::size_t f = 0; f < sweep.feature_names.size(); ++f) {
		usage << sweep.feature_names[f] << ',' << sweep.feature_usage[f] << '\n';
	}
	write_file(config.out / "feature_usage.csv", usage.str());
	return sweep;
}

// ---------------------------------------------------------------------------
// Inspect

void inspect(const RunConfig &config, const std::string &dataset_id, std::ostream &out) {
	const auto corpus = load_corpus(config);
	auto it = std::find_if(corpus.begin(), corpus.end(), [&](const TimeSeries &s) { return s.id() == dataset_id; });
	if (it == corpus.end()) {
		throw Error(ErrorCode::UnknownName, "no series '" + dataset_id + "' in the corpus");
	}
	const auto &s = *it;
	out << "id: " << s.id() << "\nsource: " << s.source() << "\nlength: " << s.size() << '\n';
	if (s.frequency_hint()) out << "frequency hint: " << *s.frequency_hint() << '\n';
	if (s.timestamps() && !s.timestamps()->empty()) {
		out << "timestamps: " << format_timestamp(s.timestamps()->front()) << " .. "
		    << format_timestamp(s.timestamps()->back()) << '\n';
	}
	for (const auto &e : s.exogenous()) {
		out << "exogenous: " << e.name << " (" << to_string(e.kind);
		if (!e.levels.empty()) out << ", " << e.levels.size() << " levels";
		out << ")\n";
	}
	const auto tt = split(s, config.split);
	const auto info = detect_seasonality(tt.train.target());
	out << "train/test: " << tt.train.size() << '/' << tt.test.size() << '\n';
	out << "seasonality: ";
	if (info.primary_period) {
		out << *info.primary_period << " (" << to_string(info.primary_mode) << ")";
		if (info.secondary_period) out << ", " << *info.secondary_period << " (" << to_string(info.secondary_mode) << ")";
	} else {
		out << "none";
	}
	out << '\n';
	try {
		const auto f = extract_features(tt.train, info);
		out << "features:\n";
		for (std::size_t i = 0; i < f.names.size(); ++i) {
			out << "  " << f.names[i] << " = " << format_double(f.values[static_cast<Index>(i)]) << '\n';
		}
	} catch (const Error &e) {
		out << "features: unavailable (" << e.what() << ")\n";
	}
	const auto store = config.out / "results.csv";
	if (!fs::exists(store)) return;
	std::vector<ResultRecord> mine;
	for (auto &r : read_results(store)) {
		if (r.dataset_id == dataset_id) mine.push_back(std::move(r));
	}
	std::sort(mine.begin(), mine.end(), [](const ResultRecord &a, const ResultRecord &b) {
		const double ra = a.rank.value_or(std::numeric_limits<double>::infinity());
		const double rb = b.rank.value_or(std::numeric_limits<double>::infinity());
		return ra != rb ? ra < rb : a.algorithm_id < b.algorithm_id;
	});
	out << "records: " << mine.size() << '\n';
	for (const auto &r : mine) {
		out << "  " << (r.rank ? format_double(*r.rank) : std::string("-")) << '\t' << to_string(r.status) << '\t'
		    << (r.status == RecordStatus::ok ? format_double(r.smape) : r.message) << '\t' << r.algorithm_id << '\n';
	}
}

} // namespace tsens
