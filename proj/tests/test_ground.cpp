#include <doctest.h>

#include "trussopt/ground.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace trussopt;

namespace {

// Independent O(m^2) geometric oracle for overlapping pairs: collinearity via
// triangle areas, interval overlap via explicit endpoint parameters.
std::set<OverlapPair> overlap_oracle(const GroundStructure& gs) {
    auto area2 = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                    const Eigen::Vector2d& c) {
        return std::abs((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
    };
    std::set<OverlapPair> out;
    const int m = gs.member_count();
    for (int i = 0; i < m; ++i) {
        const Eigen::Vector2d a1 = gs.nodes[gs.members[i].ends[0]].coord;
        const Eigen::Vector2d a2 = gs.nodes[gs.members[i].ends[1]].coord;
        for (int j = i + 1; j < m; ++j) {
            const Eigen::Vector2d b1 = gs.nodes[gs.members[j].ends[0]].coord;
            const Eigen::Vector2d b2 = gs.nodes[gs.members[j].ends[1]].coord;
            const double scale = (a2 - a1).norm() * std::max((b1 - a1).norm(), (b2 - a1).norm());
            if (area2(a1, a2, b1) > 1e-9 * std::max(scale, 1.0)) continue;
            if (area2(a1, a2, b2) > 1e-9 * std::max(scale, 1.0)) continue;
            // all four points on one line: parametrize by arc length on it
            const Eigen::Vector2d dir = (a2 - a1).normalized();
            const double s1 = 0.0, s2 = (a2 - a1).dot(dir);
            double t1 = (b1 - a1).dot(dir), t2 = (b2 - a1).dot(dir);
            if (t1 > t2) std::swap(t1, t2);
            if (std::min(s2, t2) - std::max(s1, t1) > 1e-9) out.emplace(i, j);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("grid generation matches the problem-instance table") {
    auto nodes = generate_grid(5, 2, 1.0);
    CHECK(nodes.size() == 18);
    int free_count = 0;
    for (const auto& nd : nodes) free_count += nd.free() ? 1 : 0;
    CHECK(free_count == 15);

    auto gs = make_grid_structure(5, 2, 5.0);
    CHECK(gs.free_node_count() == 15);
    CHECK(gs.dof_count() == 30);
    CHECK(gs.member_count() == 147);

    auto gs82 = make_grid_structure(8, 2, 5.0);
    CHECK(gs82.member_count() == 273);
    CHECK(gs82.dof_count() == 48);

    auto gs84 = make_grid_structure(8, 4, 5.0);
    CHECK(gs84.nodes.size() == 45);
    CHECK(gs84.free_node_count() == 40);
    CHECK(gs84.dof_count() == 80);
    CHECK(gs84.member_count() == 750);
}

TEST_CASE("smallest grid and trivial member cases") {
    auto nodes = generate_grid(1, 1, 1.0);
    CHECK(nodes.size() == 4);
    GroundStructure gs;
    gs.nodes = nodes;
    gs.members = generate_members(nodes, 2.0);
    gs.finalize();
    CHECK(gs.free_node_count() == 2);
    CHECK(gs.dof_count() == 4);

    // two-node structure with lmax >= distance -> one member
    std::vector<Node> two;
    two.push_back({0, {0, 0}, {true, true}});
    two.push_back({1, {3, 0}, {false, false}});
    auto members = generate_members(two, 3.0);
    CHECK(members.size() == 1);
    CHECK(members[0].length == doctest::Approx(3.0));

    CHECK_THROWS_AS(generate_grid(0, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(generate_grid(1, 1, 0.0), std::invalid_argument);
}

TEST_CASE("member count equals brute-force pair enumeration") {
    for (auto [nx, ny, lmax] : {std::tuple{3, 2, 2.5}, {4, 3, 3.0}, {5, 2, 5.0}}) {
        auto nodes = generate_grid(nx, ny, 1.0);
        auto members = generate_members(nodes, lmax);
        int expected = 0;
        for (size_t a = 0; a < nodes.size(); ++a)
            for (size_t b = a + 1; b < nodes.size(); ++b)
                if ((nodes[a].coord - nodes[b].coord).norm() <= lmax + 1e-9) ++expected;
        CHECK(static_cast<int>(members.size()) == expected);
    }
}

TEST_CASE("equilibrium vectors: unit norm per free end, opposite ends") {
    auto gs = make_grid_structure(3, 2, 3.0);
    for (const auto& mem : gs.members) {
        const auto b = Eigen::VectorXd(gs.equilibrium_vector(mem.id));
        const int d0 = gs.dof_index(mem.ends[0]);
        const int d1 = gs.dof_index(mem.ends[1]);
        if (d0 < 0 && d1 < 0) CHECK(b.cwiseAbs().sum() == 0.0);  // support-to-support
        if (d0 >= 0) CHECK(b.segment(d0, 2).norm() == doctest::Approx(1.0));
        if (d1 >= 0) CHECK(b.segment(d1, 2).norm() == doctest::Approx(1.0));
        if (d0 >= 0 && d1 >= 0)
            CHECK((b.segment(d0, 2) + b.segment(d1, 2)).norm() == doctest::Approx(0.0));
    }
}

TEST_CASE("incidence matrix Z matches direct accumulation") {
    auto gs = make_grid_structure(5, 2, 5.0);
    const auto& Z = gs.node_member_matrix();
    CHECK(Z.rows() == gs.free_node_count());
    CHECK(Z.cols() == gs.member_count());

    // column sums are 0, 1 or 2 free ends
    for (int i = 0; i < gs.member_count(); ++i) {
        int touches = 0;
        for (int e = 0; e < 2; ++e)
            if (gs.free_index(gs.members[i].ends[e]) >= 0) ++touches;
        CHECK(Z.col(i).sum() == doctest::Approx(touches));
    }

    // total nonzeros = sum of incidence sizes
    int total = 0;
    for (int j = 0; j < gs.free_node_count(); ++j)
        total += static_cast<int>(gs.incident_members(j).size());
    CHECK(static_cast<int>(Z.nonZeros()) == total);

    // random x >= 0: Z x equals per-node accumulation by direct loop
    std::mt19937_64 rng(99);
    Eigen::VectorXd x(gs.member_count());
    for (int i = 0; i < x.size(); ++i)
        x[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const Eigen::VectorXd z = gs.node_activity(x);
    for (int j = 0; j < gs.free_node_count(); ++j) {
        double acc = 0.0;
        for (int i : gs.incident_members(j)) acc += x[i];
        CHECK(z[j] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("single members between free/supported nodes give 2/1-entry columns") {
    std::vector<Node> nodes;
    nodes.push_back({0, {0, 0}, {true, true}});
    nodes.push_back({1, {1, 0}, {false, false}});
    nodes.push_back({2, {2, 0}, {false, false}});
    GroundStructure gs;
    gs.nodes = nodes;
    Member m01{0, {0, 1}, 0, {}};
    Member m12{1, {1, 2}, 0, {}};
    gs.members = {m01, m12};
    gs.finalize();
    const auto& Z = gs.node_member_matrix();
    CHECK(Z.col(0).sum() == doctest::Approx(1.0));  // support-to-free
    CHECK(Z.col(1).sum() == doctest::Approx(2.0));  // free-to-free
}

TEST_CASE("overlap detection: constructed cases") {
    // A(0,0) - B(1,0) - C(2,0) on a line plus a perpendicular member
    std::vector<Node> nodes;
    nodes.push_back({0, {0, 0}, {true, true}});
    nodes.push_back({1, {1, 0}, {false, false}});
    nodes.push_back({2, {2, 0}, {false, false}});
    nodes.push_back({3, {1, 1}, {false, false}});
    GroundStructure gs;
    gs.nodes = nodes;
    gs.members = {{0, {0, 1}, 0, {}},   // A-B
                  {1, {0, 2}, 0, {}},   // A-C contains A-B
                  {2, {1, 2}, 0, {}},   // B-C adjacent to A-B, no overlap
                  {3, {1, 3}, 0, {}}};  // perpendicular
    gs.finalize();
    const auto& D = gs.overlap_pairs();
    CHECK(D.count({0, 1}) == 1);
    CHECK(D.count({1, 2}) == 1);  // A-C also spans B-C
    CHECK(D.count({0, 2}) == 0);  // share only the joint node
    CHECK(D.count({0, 3}) == 0);
    CHECK(D.count({2, 3}) == 0);
}

TEST_CASE("overlap detection agrees with the brute-force oracle") {
    for (auto [nx, ny] : {std::pair{3, 2}, {5, 2}, {4, 3}}) {
        auto gs = make_grid_structure(nx, ny, 5.0);
        REQUIRE(gs.member_count() <= 500);
        CHECK(gs.overlap_pairs() == overlap_oracle(gs));
    }
}

TEST_CASE("overlap-free variant has no overlapping pairs and keeps shorter members") {
    auto gs = make_grid_structure(5, 2, 5.0);
    auto bare = gs.without_overlaps();
    CHECK(bare.overlap_pairs().empty());
    CHECK(bare.member_count() < gs.member_count());
}

TEST_CASE("hinge cancellation: chain of equal members collapses") {
    // Supported node - three collinear free nodes - anchor free node above.
    // Members: chain 0-1, 1-2, 2-3 with equal areas; plus long member 0-3
    // so the merged design is representable.
    std::vector<Node> nodes;
    nodes.push_back({0, {0, 0}, {true, true}});
    nodes.push_back({1, {1, 0}, {false, false}});
    nodes.push_back({2, {2, 0}, {false, false}});
    nodes.push_back({3, {3, 0}, {false, false}});
    GroundStructure gs;
    gs.nodes = nodes;
    gs.members = {{0, {0, 1}, 0, {}},
                  {1, {1, 2}, 0, {}},
                  {2, {2, 3}, 0, {}},
                  {3, {0, 3}, 0, {}}};
    gs.finalize();

    TrussDesign design;
    design.x = Eigen::VectorXd::Zero(4);
    design.x[0] = design.x[1] = design.x[2] = 2e-4;

    const auto result = hinge_cancel(gs, design, 1e-7);
    CHECK(result.hinges_removed == 2);
    CHECK(result.free_nodes_after == 1);
    CHECK(result.rewrote_design);
    CHECK(result.design.x[3] == doctest::Approx(2e-4));
    CHECK(result.design.x[0] == doctest::Approx(0.0));

    // no collinear equal-area pairs -> count unchanged
    TrussDesign mixed;
    mixed.x = Eigen::VectorXd::Zero(4);
    mixed.x[0] = 2e-4;
    mixed.x[3] = 1e-4;
    const auto keep = hinge_cancel(gs, mixed, 1e-7);
    CHECK(keep.hinges_removed == 0);
    CHECK(keep.free_nodes_after == 2);  // nodes 1 and 3 active, node 2 idle
}

TEST_CASE("ground structure JSON round-trip") {
    auto gs = make_grid_structure(3, 2, 3.0);
    const std::string text = to_json(gs);
    auto back = ground_structure_from_json(text);
    CHECK(back.nodes.size() == gs.nodes.size());
    CHECK(back.member_count() == gs.member_count());
    CHECK(back.dof_count() == gs.dof_count());
    for (int i = 0; i < gs.member_count(); ++i) {
        CHECK(back.members[i].ends == gs.members[i].ends);
        CHECK(back.members[i].length == doctest::Approx(gs.members[i].length));
    }
    CHECK(back.overlap_pairs() == gs.overlap_pairs());
}
