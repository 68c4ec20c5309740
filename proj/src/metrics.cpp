#include "tsensemble/metrics.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <set>

namespace tsens {

namespace {

// Nemenyi critical values q_alpha / sqrt(2) from the studentized range
// distribution with infinite degrees of freedom.
// k = 2..100
constexpr std::array<double, 99> kQ05 = {
	1.959963984540, 2.343700586378, 2.569031772546, 2.727774370870, 2.849705419610, 2.948320017530,
	3.030878449614, 3.101730341303, 3.163683577053, 3.218653607329, 3.268003924466, 3.312738593351,
	3.353617751852, 3.391230283765, 3.426041379371, 3.458424707347, 3.488684799379, 3.517073008692,
	3.543799131518, 3.569040029951, 3.592946136985, 3.615646437227, 3.637252331689, 3.657860673072,
	3.677556175853, 3.696413349185, 3.714498061375, 3.731868816887, 3.748577806831, 3.764671779385,
	3.780192765841, 3.795178690014, 3.809663882747, 3.823679518639, 3.837253988676, 3.850413219673,
	3.863180949380, 3.875578964405, 3.887627306809, 3.899344454180, 3.910747477169, 3.921852177757,
	3.932673211031, 3.943224192754, 3.953517794659, 3.963565829129, 3.973379324619, 3.982968593028,
	3.992343290009, 4.001512469103, 4.010484630418, 4.019267764515, 4.027869392046, 4.036296599626,
	4.044556072366, 4.052654123421, 4.060596720889, 4.068389512322, 4.076037847122, 4.083546797007,
	4.090921174773, 4.098165551497, 4.105284272340, 4.112281471089, 4.119161083553, 4.125926859914,
	4.132582376138, 4.139131044527, 4.145576123483, 4.151920726562, 4.158167830873, 4.164320284881,
	4.170380815658, 4.176352035642, 4.182236448921, 4.188036457107, 4.193754364808, 4.199392384750,
	4.204952642564, 4.210437181260, 4.215847965430, 4.221186885180, 4.226455759824, 4.231656341347,
	4.236790317671, 4.241859315710, 4.246864904262, 4.251808596723, 4.256691853645, 4.261516085155,
	4.266282653231, 4.270992873854, 4.275648019044, 4.280249318781, 4.284797962827, 4.289295102445,
	4.293741852035, 4.298139290676, 4.302488463597,
};

// k = 2..100
constexpr std::array<double, 99> kQ10 = {
	1.644853626951, 2.052292730497, 2.291341496888, 2.459515764271, 2.588520601922, 2.692732100968,
	2.779883608153, 2.854606431198, 2.919888840062, 2.977768251265, 3.029694183179, 3.076733468269,
	3.119693333137, 3.159198818909, 3.195743433020, 3.229723400908, 3.261461489647, 3.291223986600,
	3.319233059548, 3.345675924521, 3.370711759648, 3.394476997163, 3.417089428420, 3.438651426837,
	3.459252506195, 3.478971371807, 3.497877580225, 3.516032893597, 3.533492393480, 3.550305403481,
	3.566516258659, 3.582164951165, 3.597287675189, 3.611917289431, 3.626083711583, 3.639814256451,
	3.653133927059, 3.666065666366, 3.678630575787, 3.690848105626, 3.702736221631, 3.714311551163,
	3.725589511893, 3.736584425466, 3.747309618186, 3.757777510452, 3.767999696419, 3.777987015130,
	3.787749614195, 3.797297006924, 3.806638123710, 3.815781358333, 3.824734609778, 3.833505320083,
	3.842100508644, 3.850526803383, 3.858790469103, 3.866897433336, 3.874853309944, 3.882663420697,
	3.890332815037, 3.897866288210, 3.905268397912, 3.912543479613, 3.919695660657, 3.926728873278,
	3.933646866613, 3.940453217810, 3.947151342311, 3.953744503379, 3.960235820941, 3.966628279798,
	3.972924737257, 3.979127930237, 3.985240481888, 3.991264907766, 3.997203621587, 4.003058940619,
	4.008833090708, 4.014528210993, 4.020146358314, 4.025689511355, 4.031159574521, 4.036558381581,
	4.041887699098, 4.047149229645, 4.052344614836, 4.057475438182, 4.062543227782, 4.067549458856,
	4.072495556141, 4.077382896154, 4.082212809322, 4.086986582006, 4.091705458414, 4.096370642403,
	4.100983299196, 4.105544557006, 4.110055508575,
};
bool tied(double a, double b) {
	if (a == b) {
		return true;
	}
	// Failed specs carry infinite errors; they tie only with each other.
	if (!std::isfinite(a) || !std::isfinite(b)) {
		return false;
	}
	return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

template <typename Assign>
std::vector<double> rank_groups(std::span<const double> errors, Assign assign) {
	const std::size_t n = errors.size();
	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), 0);
	std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] < errors[b]; });
	std::vector<double> ranks(n);
	std::size_t i = 0;
	while (i < n) {
		std::size_t j = i + 1;
		while (j < n && tied(errors[order[j - 1]], errors[order[j]])) {
			++j;
		}
		const double r = assign(i + 1, j);
		for (std::size_t t = i; t < j; ++t) {
			ranks[order[t]] = r;
		}
		i = j;
	}
	return ranks;
}

} // namespace

double sape(double actual, double predicted) {
	const double den = std::abs(predicted + actual);
	const double num = std::abs(predicted - actual);
	if (den == 0.0) {
		if (num == 0.0) {
			return 0.0;
		}
		throw Error(ErrorCode::ZeroDenominator, "sape with predicted + actual = 0");
	}
	return 100.0 * num / den;
}

std::string_view to_string(RecordStatus s) {
	switch (s) {
	case RecordStatus::ok: return "ok";
	case RecordStatus::failed: return "failed";
	case RecordStatus::excluded: return "excluded";
	}
	return "ok";
}

RecordStatus parse_status(std::string_view s) {
	if (s == "ok") return RecordStatus::ok;
	if (s == "failed") return RecordStatus::failed;
	if (s == "excluded") return RecordStatus::excluded;
	throw Error(ErrorCode::SchemaError, "unknown record status '" + std::string(s) + "'");
}

std::vector<double> average_ranks(std::span<const double> errors) {
	return rank_groups(errors, [](std::size_t first, std::size_t last) {
		return 0.5 * static_cast<double>(first + last);
	});
}

std::vector<double> min_ranks(std::span<const double> errors) {
	return rank_groups(errors, [](std::size_t first, std::size_t) { return static_cast<double>(first); });
}

std::optional<Index> RankTable::algorithm_index(std::string_view id) const {
	auto it = std::lower_bound(algorithms.begin(), algorithms.end(), id);
	if (it == algorithms.end() || *it != id) {
		return std::nullopt;
	}
	return static_cast<Index>(it - algorithms.begin());
}

double RankTable::rank(std::string_view dataset, std::string_view algorithm) const {
	auto a = algorithm_index(algorithm);
	auto it = std::lower_bound(datasets.begin(), datasets.end(), dataset);
	if (!a || it == datasets.end() || *it != dataset) {
		return std::numeric_limits<double>::quiet_NaN();
	}
	return ranks[static_cast<std::size_t>(it - datasets.begin())][static_cast<std::size_t>(*a)];
}

RankTable rank_results(const std::vector<ResultRecord> &records) {
	RankTable table;
	std::set<std::string> algs;
	std::set<std::string> sets;
	std::set<std::pair<std::string, std::string>> seen;
	for (const auto &r : records) {
		if (!seen.insert({r.dataset_id, r.algorithm_id}).second) {
			throw Error(ErrorCode::InvalidArgument, "duplicate record for (" + r.dataset_id + ", " + r.algorithm_id + ")");
		}
		if (r.status != RecordStatus::ok) {
			continue;
		}
		algs.insert(r.algorithm_id);
		sets.insert(r.dataset_id);
	}
	table.algorithms.assign(algs.begin(), algs.end());
	table.datasets.assign(sets.begin(), sets.end());
	const std::size_t na = table.algorithms.size();
	const std::size_t nd = table.datasets.size();
	const double nan = std::numeric_limits<double>::quiet_NaN();
	std::vector<std::vector<double>> errors(nd, std::vector<double>(na, nan));
	for (const auto &r : records) {
		if (r.status != RecordStatus::ok) {
			continue;
		}
		auto d = static_cast<std::size_t>(std::lower_bound(table.datasets.begin(), table.datasets.end(), r.dataset_id) - table.datasets.begin());
		auto a = static_cast<std::size_t>(*table.algorithm_index(r.algorithm_id));
		errors[d][a] = r.smape;
	}
	table.ranks.assign(nd, std::vector<double>(na, nan));
	table.mean_rank.assign(na, 0.0);
	table.wins.assign(na, 0);
	table.counts.assign(na, 0);
	for (std::size_t d = 0; d < nd; ++d) {
		std::vector<std::size_t> present;
		std::vector<double> errs;
		for (std::size_t a = 0; a < na; ++a) {
			if (!std::isnan(errors[d][a])) {
				present.push_back(a);
				errs.push_back(errors[d][a]);
			}
		}
		auto rk = average_ranks(errs);
		auto mk = min_ranks(errs);
		for (std::size_t i = 0; i < present.size(); ++i) {
			const auto a = present[i];
			table.ranks[d][a] = rk[i];
			table.mean_rank[a] += rk[i];
			table.counts[a] += 1;
			if (mk[i] == 1.0) {
				table.wins[a] += 1;
			}
		}
	}
	for (std::size_t a = 0; a < na; ++a) {
		table.mean_rank[a] /= std::max(table.counts[a], 1);
	}
	return table;
}

double nemenyi_q(int k, double alpha) {
	if (k < 2 || k > 100) {
		throw Error(ErrorCode::InvalidArgument, "Nemenyi table covers 2 <= k <= 100, got k=" + std::to_string(k));
	}
	if (alpha == 0.05) {
		return kQ05[static_cast<std::size_t>(k - 2)];
	}
	if (alpha == 0.10 || alpha == 0.1) {
		return kQ10[static_cast<std::size_t>(k - 2)];
	}
	throw Error(ErrorCode::UnsupportedAlpha, "alpha must be 0.05 or 0.10");
}

CriticalDifference nemenyi_cd(int k, int datasets, double alpha) {
	if (datasets < 2) {
		throw Error(ErrorCode::InvalidArgument, "critical difference needs at least 2 datasets");
	}
	CriticalDifference cd;
	cd.k = k;
	cd.n = datasets;
	cd.alpha = alpha;
	cd.q = nemenyi_q(k, alpha);
	cd.cd_value = cd.q * std::sqrt(static_cast<double>(k) * (k + 1) / (6.0 * datasets));
	return cd;
}

std::vector<std::vector<Index>> cd_groups(std::span<const double> mean_ranks, double cd) {
	const auto n = static_cast<Index>(mean_ranks.size());
	std::vector<Index> order(static_cast<std::size_t>(n));
	std::iota(order.begin(), order.end(), Index{0});
	std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
		return mean_ranks[static_cast<std::size_t>(a)] < mean_ranks[static_cast<std::size_t>(b)];
	});
	auto value = [&](Index pos) { return mean_ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])]; };
	std::vector<std::vector<Index>> groups;
	Index prev_end = -1;
	Index end = 0;
	for (Index start = 0; start < n; ++start) {
		end = std::max(end, start);
		while (end + 1 < n && value(end + 1) - value(start) < cd) {
			++end;
		}
		if (end > prev_end) {
			groups.emplace_back(order.begin() + start, order.begin() + end + 1);
			prev_end = end;
		}
	}
	return groups;
}

} // namespace tsens
