#include "tsensemble/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tsens {

namespace {

void write_text(const fs::path &path, const std::string &content) {
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out) {
		throw Error(ErrorCode::Io, "cannot write " + path.string());
	}
	out << content;
}

std::string xml_escape(std::string_view s) {
	std::string out;
	for (char c : s) {
		switch (c) {
		case '&': out += "&amp;"; break;
		case '<': out += "&lt;"; break;
		case '>': out += "&gt;"; break;
		case '"': out += "&quot;"; break;
		default: out.push_back(c);
		}
	}
	return out;
}

std::string fixed(double v, int digits) {
	char buf[48];
	std::snprintf(buf, sizeof buf, "%.*f", digits, v);
	return buf;
}

/// Algorithm indices by ascending mean rank, ties by name.
std::vector<std::size_t> rank_order(const RankTable &t) {
	std::vector<std::size_t> order(t.algorithms.size());
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
		if (t.mean_rank[a] != t.mean_rank[b]) return t.mean_rank[a] < t.mean_rank[b];
		return t.algorithms[a] < t.algorithms[b];
	});
	return order;
}

struct CdResult {
	std::optional<CriticalDifference> cd;
	std::vector<std::vector<Index>> groups;
};

CdResult cd_for(const RankTable &t, double alpha) {
	CdResult r;
	const int k = static_cast<int>(t.algorithms.size());
	const int n = static_cast<int>(t.datasets.size());
	if (k < 2 || n < 1) return r;
	r.cd = nemenyi_cd(k, n, alpha);
	r.groups = cd_groups(t.mean_rank, r.cd->cd_value);
	return r;
}

std::string ranks_csv(const RankTable &t, const CdResult &cd) {
	std::ostringstream out;
	out << "algorithm,kind,mean_rank,wins,datasets,cd_groups\n";
	for (auto a : rank_order(t)) {
		std::string groups;
		for (std::size_t g = 0; g < cd.groups.size(); ++g) {
			const auto &members = cd.groups[g];
			if (std::find(members.begin(), members.end(), static_cast<Index>(a)) != members.end()) {
				if (!groups.empty()) groups += ';';
				groups += std::to_string(g + 1);
			}
		}
		out << csv_field(t.algorithms[a]) << ',' << (is_base_model(t.algorithms[a]) ? "base" : "ensemble") << ','
		    << format_double(t.mean_rank[a]) << ',' << t.wins[a] << ',' << t.counts[a] << ',' << groups << '\n';
	}
	return out.str();
}

std::string cd_svg(const RankTable &t, const CdResult &cd) {
	const auto order = rank_order(t);
	const double lo = 1.0;
	const double hi = std::max(2.0, std::ceil(t.mean_rank.empty() ? 2.0 : *std::max_element(t.mean_rank.begin(), t.mean_rank.end())));
	const int width = 900;
	const int left = 60;
	const int right = 60;
	const int axis_y = 60;
	const int row_h = 16;
	auto x_of = [&](double r) { return left + (r - lo) / (hi - lo) * (width - left - right); };
	const int height = axis_y + 40 + row_h * static_cast<int>(order.size() + cd.groups.size()) + 20;
	std::ostringstream s;
	s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
	  << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
	s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
	s << "<line x1=\"" << x_of(lo) << "\" y1=\"" << axis_y << "\" x2=\"" << x_of(hi) << "\" y2=\"" << axis_y << "\" stroke=\"black\"/>\n";
	const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 20.0)));
	for (int r = static_cast<int>(lo); r <= static_cast<int>(hi); r += step) {
		s << "<line x1=\"" << fixed(x_of(r), 2) << "\" y1=\"" << axis_y - 5 << "\" x2=\"" << fixed(x_of(r), 2) << "\" y2=\""
		  << axis_y << "\" stroke=\"black\"/>";
		s << "<text x=\"" << fixed(x_of(r), 2) << "\" y=\"" << axis_y - 8 << "\" text-anchor=\"middle\">" << r << "</text>\n";
	}
	if (cd.cd) {
		s << "<line x1=\"" << fixed(x_of(lo), 2) << "\" y1=\"20\" x2=\"" << fixed(x_of(lo + cd.cd->cd_value), 2)
		  << "\" y2=\"20\" stroke=\"black\" stroke-width=\"2\"/>";
		s << "<text x=\"" << fixed(x_of(lo), 2) << "\" y=\"14\">CD = " << fixed(cd.cd->cd_value, 3) << "</text>\n";
	}
	int y = axis_y + 20;
	for (auto a : order) {
		const double x = x_of(t.mean_rank[a]);
		s << "<circle cx=\"" << fixed(x, 2) << "\" cy=\"" << axis_y << "\" r=\"2.5\"/>";
		s << "<line x1=\"" << fixed(x, 2) << "\" y1=\"" << axis_y << "\" x2=\"" << fixed(x, 2) << "\" y2=\"" << y
		  << "\" stroke=\"#999\"/>";
		s << "<text x=\"" << fixed(x + 4, 2) << "\" y=\"" << y + 4 << "\">" << xml_escape(t.algorithms[a]) << " ("
		  << fixed(t.mean_rank[a], 2) << ")</text>\n";
		y += row_h;
	}
	for (const auto &g : cd.groups) {
		if (g.size() < 2) continue;
		double a = std::numeric_limits<double>::infinity();
		double b = -a;
		for (Index i : g) {
			a = std::min(a, t.mean_rank[static_cast<std::size_t>(i)]);
			b = std::max(b, t.mean_rank[static_cast<std::size_t>(i)]);
		}
		s << "<line x1=\"" << fixed(x_of(a), 2) << "\" y1=\"" << y << "\" x2=\"" << fixed(x_of(b), 2) << "\" y2=\"" << y
		  << "\" stroke=\"black\" stroke-width=\"3\"/>\n";
		y += row_h / 2;
	}
	s << "</svg>\n";
	return s.str();
}

std::string wins_svg(const RankTable &t) {
	std::vector<std::size_t> order(t.algorithms.size());
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
		if (t.wins[a] != t.wins[b]) return t.wins[a] > t.wins[b];
		return t.algorithms[a] < t.algorithms[b];
	});
	const int max_wins = std::max(1, t.wins.empty() ? 1 : *std::max_element(t.wins.begin(), t.wins.end()));
	const int label_w = 420;
	const int bar_w = 400;
	const int row_h = 14;
	std::ostringstream s;
	s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << label_w + bar_w + 60 << "\" height=\""
	  << row_h * static_cast<int>(order.size()) + 20 << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
	s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
	int y = 10;
	for (auto a : order) {
		const double w = static_cast<double>(t.wins[a]) / max_wins * bar_w;
		const char *fill = is_base_model(t.algorithms[a]) ? "#d62728" : "#1f77b4";
		s << "<text x=\"" << label_w - 4 << "\" y=\"" << y + 10 << "\" text-anchor=\"end\">" << xml_escape(t.algorithms[a]) << "</text>";
		s << "<rect x=\"" << label_w << "\" y=\"" << y + 2 << "\" width=\"" << fixed(w, 2) << "\" height=\"" << row_h - 4
		  << "\" fill=\"" << fill << "\"/>";
		s << "<text x=\"" << fixed(label_w + w + 4, 2) << "\" y=\"" << y + 10 << "\">" << t.wins[a] << "</text>\n";
		y += row_h;
	}
	s << "</svg>\n";
	return s.str();
}

} // namespace

ReportKind parse_report_kind(std::string_view name) {
	if (name == "ranks") return ReportKind::ranks;
	if (name == "wins") return ReportKind::wins;
	if (name == "cd") return ReportKind::cd;
	if (name == "per-source" || name == "per_source") return ReportKind::per_source;
	throw Error(ErrorCode::UnknownName, "unknown report kind '" + std::string(name) + "'");
}

bool is_base_model(std::string_view algorithm_id) {
	return parse_base_model(algorithm_id).has_value();
}

WinShare ensemble_win_share(const RankTable &table) {
	WinShare w;
	for (std::size_t a = 0; a < table.algorithms.size(); ++a) {
		(is_base_model(table.algorithms[a]) ? w.base_wins : w.ensemble_wins) += table.wins[a];
	}
	const int total = w.base_wins + w.ensemble_wins;
	w.share = total > 0 ? static_cast<double>(w.ensemble_wins) / total : 0.0;
	return w;
}

std::vector<fs::path> write_report(const std::vector<ResultRecord> &records, ReportKind kind, const fs::path &dir, double alpha) {
	if (records.empty()) {
		throw Error(ErrorCode::EmptyStore, "the results store is empty");
	}
	fs::create_directories(dir);
	const auto table = rank_results(records);
	if (table.datasets.empty()) {
		throw Error(ErrorCode::EmptyStore, "the results store has no successful records");
	}
	std::vector<fs::path> written;
	auto emit = [&](const std::string &name, const std::string &content) {
		write_text(dir / name, content);
		written.push_back(dir / name);
	};
	switch (kind) {
	case ReportKind::ranks: {
		emit("ranks.csv", ranks_csv(table, cd_for(table, alpha)));
		break;
	}
	case ReportKind::cd: {
		const auto cd = cd_for(table, alpha);
		std::ostringstream out;
		out << "k,datasets,alpha,q,cd\n";
		if (cd.cd) {
			out << cd.cd->k << ',' << cd.cd->n << ',' << format_double(cd.cd->alpha) << ',' << format_double(cd.cd->q) << ','
			    << format_double(cd.cd->cd_value) << '\n';
		}
		out << "\ngroup,min_rank,max_rank,algorithms\n";
		for (std::size_t g = 0; g < cd.groups.size(); ++g) {
			double lo = std::numeric_limits<double>::infinity();
			double hi = -lo;
			std::string names;
			for (Index i : cd.groups[g]) {
				const auto a = static_cast<std::size_t>(i);
				lo = std::min(lo, table.mean_rank[a]);
				hi = std::max(hi, table.mean_rank[a]);
				if (!names.empty()) names += ';';
				names += table.algorithms[a];
			}
			out << g + 1 << ',' << format_double(lo) << ',' << format_double(hi) << ',' << csv_field(names) << '\n';
		}
		emit("cd.csv", out.str());
		emit("cd.svg", cd_svg(table, cd));
		break;
	}
	case ReportKind::wins: {
		std::vector<std::size_t> order(table.algorithms.size());
		std::iota(order.begin(), order.end(), std::size_t{0});
		std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
			if (table.wins[a] != table.wins[b]) return table.wins[a] > table.wins[b];
			return table.algorithms[a] < table.algorithms[b];
		});
		std::ostringstream out;
		out << "algorithm,kind,wins,datasets\n";
		for (auto a : order) {
			out << csv_field(table.algorithms[a]) << ',' << (is_base_model(table.algorithms[a]) ? "base" : "ensemble") << ','
			    << table.wins[a] << ',' << table.counts[a] << '\n';
		}
		emit("wins.csv", out.str());
		emit("wins.svg", wins_svg(table));
		const auto share = ensemble_win_share(table);
		std::ostringstream ws;
		ws << "ensemble_wins,base_wins,ensemble_share\n"
		   << share.ensemble_wins << ',' << share.base_wins << ',' << format_double(share.share) << '\n';
		emit("win_share.csv", ws.str());
		break;
	}
	case ReportKind::per_source: {
		std::map<std::string, std::vector<ResultRecord>> by_source;
		for (const auto &r : records) by_source[r.source].push_back(r);
		std::ostringstream out;
		out << "source,algorithm,kind,mean_rank,wins,datasets\n";
		for (const auto &[source, subset] : by_source) {
			const auto t = rank_results(subset);
			for (auto a : rank_order(t)) {
				out << csv_field(source) << ',' << csv_field(t.algorithms[a]) << ','
				    << (is_base_model(t.algorithms[a]) ? "base" : "ensemble") << ',' << format_double(t.mean_rank[a]) << ','
				    << t.wins[a] << ',' << t.counts[a] << '\n';
			}
		}
		emit("per_source.csv", out.str());
		break;
	}
	}
	return written;
}

} // namespace tsens
