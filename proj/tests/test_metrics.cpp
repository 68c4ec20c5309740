#include "catch_amalgamated.hpp"

#include "oracles.hpp"
#include "tsensemble/metrics.hpp"

#include <set>

using namespace tsens;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vector vec(std::initializer_list<double> v) {
	Vector out(static_cast<Index>(v.size()));
	Index i = 0;
	for (double x : v) out[i++] = x;
	return out;
}

ResultRecord rec(std::string d, std::string a, double e) {
	ResultRecord r;
	r.dataset_id = std::move(d);
	r.algorithm_id = std::move(a);
	r.smape = e;
	return r;
}

void check_groups_valid(const std::vector<double> &ranks, double cd, const std::vector<std::vector<Index>> &groups) {
	std::vector<Index> order(ranks.size());
	std::iota(order.begin(), order.end(), Index{0});
	std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return ranks[a] < ranks[b]; });
	std::set<Index> covered;
	for (const auto &g : groups) {
		REQUIRE_FALSE(g.empty());
		double lo = ranks[g.front()], hi = lo;
		for (Index i : g) {
			lo = std::min(lo, ranks[i]);
			hi = std::max(hi, ranks[i]);
			covered.insert(i);
		}
		CHECK((g.size() == 1 || hi - lo < cd));
		// Every algorithm whose rank lies inside the group's span belongs to it,
		// and no neighbour could be added without breaking the rule.
		for (Index i = 0; i < static_cast<Index>(ranks.size()); ++i) {
			const bool inside = ranks[i] >= lo && ranks[i] <= hi;
			const bool member = std::find(g.begin(), g.end(), i) != g.end();
			if (inside) CHECK(member);
			if (!member) CHECK(std::max(hi, ranks[i]) - std::min(lo, ranks[i]) >= cd);
		}
	}
	CHECK(covered.size() == ranks.size());
}

} // namespace

TEST_CASE("customised sMAPE", "[metrics]") {
	CHECK(smape_custom(vec({3, 1, 4}), vec({3, 1, 4})) == 0.0);
	CHECK_THAT(smape_custom(vec({0, 0, 0}), vec({1, 1, 1})), WithinAbs(100.0, 1e-9));
	CHECK_THAT(smape_custom(vec({10}), vec({5})), WithinAbs(100.0 / 3.0, 1e-9));
	CHECK_THROWS_MATCHES(smape_custom(vec({0, 0}), vec({0, 0})), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::ZeroDenominator; }));
	CHECK_FALSE(try_smape(vec({1, -1}), vec({2, -2})).has_value());
	CHECK_THROWS_AS(smape_custom(vec({1, 2}), vec({1})), Error);
}

TEST_CASE("sMAPE matches a direct sum, is symmetric and scale free", "[metrics][property]") {
	Rng rng(2);
	for (int rep = 0; rep < 100; ++rep) {
		const Index n = 1 + rng.uniform_index(20);
		Vector a(n), p(n);
		for (Index i = 0; i < n; ++i) {
			a[i] = 10.0 * rng.uniform();
			p[i] = 10.0 * rng.uniform();
		}
		const double s = smape_custom(a, p);
		CHECK_THAT(s, WithinRel(oracle::smape(a, p), 1e-12));
		CHECK(smape_custom(p, a) == s);
		const double c = std::exp(6.0 * rng.normal());
		CHECK_THAT(smape_custom(Vector(c * a), Vector(c * p)), WithinRel(s, 1e-12));
	}
}

TEST_CASE("sAPE", "[metrics]") {
	CHECK(sape(5, 5) == 0.0);
	CHECK_THAT(sape(0, 2), WithinAbs(100.0, 1e-12));
	CHECK(sape(0, 0) == 0.0);
	CHECK_THAT(sape(1, 3), WithinAbs(50.0, 1e-12));
}

TEST_CASE("ranking examples", "[metrics]") {
	const auto t = rank_results({rec("d", "A", 1.0), rec("d", "B", 2.0), rec("d", "C", 3.0)});
	CHECK(t.rank("d", "A") == 1.0);
	CHECK(t.rank("d", "B") == 2.0);
	CHECK(t.rank("d", "C") == 3.0);
	CHECK(t.wins[*t.algorithm_index("A")] == 1);

	const auto tie = rank_results({rec("d", "A", 1.0), rec("d", "B", 1.0), rec("d", "C", 2.0)});
	CHECK(tie.rank("d", "A") == 1.5);
	CHECK(tie.rank("d", "B") == 1.5);
	CHECK(tie.rank("d", "C") == 3.0);

	const auto two = rank_results({rec("d1", "A", 1.0), rec("d1", "B", 2.0), rec("d2", "A", 0.5), rec("d2", "B", 9.0)});
	const Index a = *two.algorithm_index("A");
	CHECK(two.mean_rank[a] == 1.0);
	CHECK(two.wins[a] == 2);

	auto failed = rec("d", "C", 0.0);
	failed.status = RecordStatus::failed;
	const auto skip = rank_results({rec("d", "A", 1.0), rec("d", "B", 2.0), failed});
	CHECK(std::isnan(skip.rank("d", "C")));
	CHECK(skip.rank("d", "B") == 2.0);

	CHECK(min_ranks(std::vector<double>{1.0, 1.0, 2.0}) == std::vector<double>{1.0, 1.0, 3.0});
}

TEST_CASE("ranks sum to k(k+1)/2 and stay in range", "[metrics][property]") {
	Rng rng(4);
	for (int rep = 0; rep < 200; ++rep) {
		const Index k = 2 + rng.uniform_index(30);
		std::vector<double> e(static_cast<std::size_t>(k));
		for (auto &v : e) v = rep % 2 ? rng.uniform() : std::floor(4.0 * rng.uniform());
		const auto r = average_ranks(e);
		const double sum = std::accumulate(r.begin(), r.end(), 0.0);
		CHECK_THAT(sum, WithinAbs(k * (k + 1) / 2.0, 1e-9));
		for (double v : r) CHECK((v >= 1.0 && v <= static_cast<double>(k)));
	}
}

TEST_CASE("critical difference", "[metrics]") {
	for (int n : {10, 50, 200}) {
		CHECK_THAT(nemenyi_cd(2, n).cd_value, WithinRel(nemenyi_q(2, 0.05) / std::sqrt(n), 1e-12));
	}
	CHECK_THAT(nemenyi_cd(10, 100).cd_value, WithinAbs(oracle::nemenyi_cd(10, 100, 0.05), 1e-6));
	CHECK_THAT(nemenyi_cd(7, 40).cd_value, WithinRel(2.0 * nemenyi_cd(7, 160).cd_value, 1e-12));
	CHECK_THROWS_MATCHES(nemenyi_cd(5, 10, 0.01), Error,
	                     Catch::Matchers::Predicate<Error>([](const Error &e) { return e.code() == ErrorCode::UnsupportedAlpha; }));
	// Published two-sided Nemenyi values.
	CHECK_THAT(nemenyi_q(2, 0.05), WithinAbs(1.960, 5e-4));
	CHECK_THAT(nemenyi_q(10, 0.05), WithinAbs(3.164, 5e-4));
	CHECK_THAT(nemenyi_q(10, 0.10), WithinAbs(2.920, 5e-4));
}

TEST_CASE("critical difference agrees with a studentized-range integral", "[metrics][property]") {
	for (int k = 2; k <= 20; ++k) {
		const double q05 = oracle::studentized_range_quantile(k, 0.05) / std::numbers::sqrt2;
		const double q10 = oracle::studentized_range_quantile(k, 0.10) / std::numbers::sqrt2;
		for (int n : {10, 100, 1000}) {
			const double scale = std::sqrt(k * (k + 1.0) / (6.0 * n));
			CHECK_THAT(nemenyi_cd(k, n, 0.05).cd_value, WithinAbs(q05 * scale, 1e-6));
			CHECK_THAT(nemenyi_cd(k, n, 0.10).cd_value, WithinAbs(q10 * scale, 1e-6));
		}
		CHECK(nemenyi_cd(k + 1, 50).cd_value > nemenyi_cd(k, 50).cd_value);
	}
}

TEST_CASE("CD groups", "[metrics]") {
	CHECK(cd_groups(std::vector<double>{1, 2, 10}, 2.0) == std::vector<std::vector<Index>>{{0, 1}, {2}});
	CHECK(cd_groups(std::vector<double>{3, 1, 2}, 5.0) == std::vector<std::vector<Index>>{{1, 2, 0}});
	CHECK(cd_groups(std::vector<double>{2, 2, 2}, 0.5).size() == 1);
	const auto overlapping = cd_groups(std::vector<double>{1, 2, 3}, 1.5);
	CHECK(overlapping == std::vector<std::vector<Index>>{{0, 1}, {1, 2}});
}

TEST_CASE("CD groups are maximal intervals that cover everyone", "[metrics][property]") {
	Rng rng(6);
	for (int rep = 0; rep < 300; ++rep) {
		const Index k = 2 + rng.uniform_index(25);
		std::vector<double> ranks(static_cast<std::size_t>(k));
		for (auto &r : ranks) r = 1.0 + (k - 1) * rng.uniform();
		const double cd = 0.1 + 5.0 * rng.uniform();
		check_groups_valid(ranks, cd, cd_groups(ranks, cd));
	}
}

TEST_CASE("groups survive order-preserving error transforms", "[metrics][property]") {
	Rng rng(7);
	for (int rep = 0; rep < 30; ++rep) {
		std::vector<ResultRecord> raw, bent;
		for (int d = 0; d < 15; ++d) {
			for (int a = 0; a < 6; ++a) {
				const double e = std::fabs(rng.normal() + 0.3 * a);
				const std::string ds = "d" + std::to_string(d), al = "a" + std::to_string(a);
				raw.push_back(rec(ds, al, e));
				bent.push_back(rec(ds, al, std::exp(e) + e * e * e));
			}
		}
		const auto t1 = rank_results(raw), t2 = rank_results(bent);
		CHECK(t1.mean_rank == t2.mean_rank);
		const double cd = nemenyi_cd(6, 15).cd_value;
		CHECK(cd_groups(t1.mean_rank, cd) == cd_groups(t2.mean_rank, cd));
	}
}
