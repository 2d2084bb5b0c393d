#include "trussopt/ground.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace trussopt {

namespace {

constexpr double kLengthSlack = 1e-9;   // members of length exactly lmax are kept
constexpr double kCollinearTol = 1e-9;  // on normalized cross products

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() * b.y() - a.y() * b.x();
}

}  // namespace

std::vector<Node> generate_grid(int nx, int ny, double spacing) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("grid dimensions must be >= 1");
    if (!(spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");

    std::vector<Node> nodes;
    nodes.reserve(static_cast<size_t>(nx + 1) * (ny + 1));
    for (int iy = 0; iy <= ny; ++iy) {
        for (int ix = 0; ix <= nx; ++ix) {
            Node nd;
            nd.id = iy * (nx + 1) + ix;
            nd.coord = Eigen::Vector2d(ix * spacing, iy * spacing);
            const bool pinned = (ix == 0);
            nd.fixed = {pinned, pinned};
            nodes.push_back(nd);
        }
    }
    return nodes;
}

std::vector<Member> generate_members(const std::vector<Node>& nodes, double lmax) {
    if (nodes.size() < 2) throw std::invalid_argument("need at least two nodes");
    if (!(lmax > 0.0)) throw std::invalid_argument("lmax must be positive");

    std::vector<Member> members;
    const int nn = static_cast<int>(nodes.size());
    for (int a = 0; a < nn; ++a) {
        for (int b = a + 1; b < nn; ++b) {
            const Eigen::Vector2d delta = nodes[b].coord - nodes[a].coord;
            const double len = delta.norm();
            if (len <= lmax + kLengthSlack) {
                Member mem;
                mem.id = static_cast<int>(members.size());
                mem.ends = {nodes[a].id, nodes[b].id};
                mem.length = len;
                mem.dir = delta / len;
                members.push_back(mem);
            }
        }
    }
    return members;
}

GroundStructure make_grid_structure(int nx, int ny, double lmax, double spacing) {
    GroundStructure gs;
    gs.nodes = generate_grid(nx, ny, spacing);
    gs.members = generate_members(gs.nodes, lmax);
    gs.finalize();
    return gs;
}

std::set<OverlapPair> detect_overlaps(const std::vector<Member>& members,
                                      const std::vector<Node>& nodes) {
    std::set<OverlapPair> pairs;
    const int m = static_cast<int>(members.size());
    for (int i = 0; i < m; ++i) {
        const auto& mi = members[i];
        const Eigen::Vector2d pa = nodes[mi.ends[0]].coord;
        for (int j = i + 1; j < m; ++j) {
            const auto& mj = members[j];
            if (std::abs(cross2(mi.dir, mj.dir)) > kCollinearTol) continue;
            // Parallel; collinear only if mj's base point lies on mi's line.
            const Eigen::Vector2d qa = nodes[mj.ends[0]].coord;
            const Eigen::Vector2d off = qa - pa;
            const double off_norm = off.norm();
            if (off_norm > 0.0 && std::abs(cross2(mi.dir, off / off_norm)) > kCollinearTol)
                continue;
            // Project both segments onto mi's axis; an overlap of positive
            // length means one segment covers interior points of the other.
            const double s0 = 0.0;
            const double s1 = mi.length;
            double t0 = mi.dir.dot(qa - pa);
            double t1 = t0 + mi.dir.dot(mj.dir) * mj.length;
            if (t0 > t1) std::swap(t0, t1);
            const double overlap = std::min(s1, t1) - std::max(s0, t0);
            if (overlap > kLengthSlack) pairs.emplace(mi.id, mj.id);
        }
    }
    return pairs;
}

void GroundStructure::finalize() {
    const int nn = static_cast<int>(nodes.size());
    for (int i = 0; i < nn; ++i) {
        if (nodes[i].id != i) throw std::invalid_argument("node ids must be dense 0..n-1");
    }

    free_index_.assign(nn, -1);
    dof_index_.assign(nn, -1);
    free_ids_.clear();
    l_ = 0;
    for (const Node& nd : nodes) {
        if (nd.fixed[0] != nd.fixed[1])
            throw std::invalid_argument("single-axis supports are not supported yet");
        if (nd.free()) {
            free_index_[nd.id] = l_++;
            free_ids_.push_back(nd.id);
        }
    }
    d_ = 2 * l_;
    for (int id = 0; id < nn; ++id)
        if (free_index_[id] >= 0) dof_index_[id] = 2 * free_index_[id];

    incidence_.assign(l_, {});
    std::vector<Eigen::Triplet<double>> trips;
    for (Member& mem : members) {
        if (mem.ends[0] == mem.ends[1]) throw std::invalid_argument("degenerate member");
        if (mem.ends[0] > mem.ends[1]) std::swap(mem.ends[0], mem.ends[1]);
        const Eigen::Vector2d delta = nodes[mem.ends[1]].coord - nodes[mem.ends[0]].coord;
        mem.length = delta.norm();
        if (!(mem.length > 0.0)) throw std::invalid_argument("zero-length member");
        mem.dir = delta / mem.length;
        for (int e = 0; e < 2; ++e) {
            const int fj = free_index_[mem.ends[e]];
            if (fj >= 0) {
                incidence_[fj].push_back(mem.id);
                trips.emplace_back(fj, mem.id, 1.0);
            }
        }
    }
    Z_.resize(l_, member_count());
    Z_.setFromTriplets(trips.begin(), trips.end());
    overlaps_ = detect_overlaps(members, nodes);
}

Eigen::SparseVector<double> GroundStructure::equilibrium_vector(int member_id) const {
    const Member& mem = members.at(member_id);
    Eigen::SparseVector<double> b(d_);
    const double sign[2] = {-1.0, 1.0};
    for (int e = 0; e < 2; ++e) {
        const int dof = dof_index_[mem.ends[e]];
        if (dof >= 0) {
            b.insert(dof) = sign[e] * mem.dir.x();
            b.insert(dof + 1) = sign[e] * mem.dir.y();
        }
    }
    return b;
}

Eigen::VectorXd GroundStructure::node_activity(const Eigen::VectorXd& x) const {
    return Z_ * x;
}

Eigen::VectorXd GroundStructure::lengths() const {
    Eigen::VectorXd c(member_count());
    for (int i = 0; i < member_count(); ++i) c[i] = members[i].length;
    return c;
}

GroundStructure GroundStructure::without_overlaps() const {
    std::vector<bool> drop(members.size(), false);
    for (const auto& [i, j] : overlaps_) {
        if (members[i].length >= members[j].length)
            drop[i] = true;
        else
            drop[j] = true;
    }
    GroundStructure out;
    out.nodes = nodes;
    for (const Member& mem : members) {
        if (drop[mem.id]) continue;
        Member copy = mem;
        copy.id = static_cast<int>(out.members.size());
        out.members.push_back(copy);
    }
    out.finalize();
    return out;
}

int TrussDesign::active_free_nodes(const GroundStructure& gs, double eps_node) const {
    const Eigen::VectorXd z = gs.node_activity(x);
    int count = 0;
    for (int j = 0; j < z.size(); ++j)
        if (z[j] > eps_node) ++count;
    return count;
}

namespace {

// Working view of a design as an abstract segment graph so chains can be
// contracted even when the merged span is absent from the ground structure.
struct Segment {
    int a, b;       // node ids
    double area;
    int member_id;  // original member, -1 once merged spans are synthetic
};

bool collinear_opposite(const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
    return std::abs(cross2(u, v)) <= kCollinearTol && u.dot(v) < 0.0;
}

}  // namespace

HingeCancelResult hinge_cancel(const GroundStructure& gs, const TrussDesign& design,
                               double tol_area) {
    if ((design.x.array() < 0.0).any())
        throw std::invalid_argument("design areas must be nonnegative");

    constexpr double kRelAreaTol = 1e-6;

    std::vector<Segment> segs;
    for (const Member& mem : gs.members)
        if (design.x[mem.id] > tol_area)
            segs.push_back({mem.ends[0], mem.ends[1], design.x[mem.id], mem.id});

    // node id -> indices of live segments touching it
    std::map<int, std::vector<int>> touch;
    auto rebuild_touch = [&]() {
        touch.clear();
        for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
            if (segs[s].area < 0) continue;  // tombstone
            touch[segs[s].a].push_back(s);
            touch[segs[s].b].push_back(s);
        }
    };
    rebuild_touch();

    int hinges = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& [node_id, incident] : touch) {
            if (gs.free_index(node_id) < 0) continue;  // supports are never hinges
            if (incident.size() != 2) continue;
            const Segment& s1 = segs[incident[0]];
            const Segment& s2 = segs[incident[1]];
            const int other1 = (s1.a == node_id) ? s1.b : s1.a;
            const int other2 = (s2.a == node_id) ? s2.b : s2.a;
            if (other1 == other2) continue;
            const Eigen::Vector2d u = gs.nodes[other1].coord - gs.nodes[node_id].coord;
            const Eigen::Vector2d v = gs.nodes[other2].coord - gs.nodes[node_id].coord;
            if (!collinear_opposite(u.normalized(), v.normalized())) continue;
            const double scale = std::max(s1.area, s2.area);
            if (std::abs(s1.area - s2.area) > kRelAreaTol * scale) continue;

            // Merge the two segments across the hinge node.
            Segment merged;
            merged.a = std::min(other1, other2);
            merged.b = std::max(other1, other2);
            merged.area = 0.5 * (s1.area + s2.area);
            merged.member_id = -1;
            segs[incident[0]].area = -1;
            segs[incident[1]].area = -1;
            segs.push_back(merged);
            ++hinges;
            changed = true;
            rebuild_touch();
            break;
        }
    }

    // Count free nodes still touched by a live segment.
    int active_free = 0;
    for (const auto& [node_id, incident] : touch)
        if (gs.free_index(node_id) >= 0 && !incident.empty()) ++active_free;

    HingeCancelResult result;
    result.hinges_removed = hinges;
    result.free_nodes_after = active_free;
    result.design = design;

    if (hinges == 0) return result;

    // Rewrite x only if every merged span exists as a ground-structure member.
    std::map<std::pair<int, int>, int> span_to_member;
    for (const Member& mem : gs.members)
        span_to_member[{mem.ends[0], mem.ends[1]}] = mem.id;

    Eigen::VectorXd x_new = Eigen::VectorXd::Zero(design.x.size());
    bool representable = true;
    for (const Segment& s : segs) {
        if (s.area < 0) continue;
        if (s.member_id >= 0) {
            x_new[s.member_id] = s.area;
        } else {
            auto it = span_to_member.find({std::min(s.a, s.b), std::max(s.a, s.b)});
            if (it == span_to_member.end()) {
                representable = false;
                break;
            }
            x_new[it->second] += s.area;
        }
    }
    if (representable) {
        result.design.x = x_new;
        result.design.volume = gs.lengths().dot(x_new);
        result.design.compliance.reset();
        result.rewrote_design = true;
    }
    return result;
}

std::string to_json(const GroundStructure& gs) {
    nlohmann::ordered_json doc;
    doc["units"] = "SI";
    doc["nodes"] = nlohmann::ordered_json::array();
    for (const Node& nd : gs.nodes) {
        doc["nodes"].push_back({{"id", nd.id},
                                {"x", nd.coord.x()},
                                {"y", nd.coord.y()},
                                {"fixed", {nd.fixed[0], nd.fixed[1]}}});
    }
    doc["members"] = nlohmann::ordered_json::array();
    for (const Member& mem : gs.members)
        doc["members"].push_back({{"id", mem.id}, {"ends", {mem.ends[0], mem.ends[1]}}});
    return doc.dump(2);
}

GroundStructure ground_structure_from_json(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    if (doc.value("units", "") != "SI")
        throw std::invalid_argument("ground structure JSON must declare units:\"SI\"");
    GroundStructure gs;
    for (const auto& jn : doc.at("nodes")) {
        Node nd;
        nd.id = jn.at("id").get<int>();
        nd.coord = Eigen::Vector2d(jn.at("x").get<double>(), jn.at("y").get<double>());
        const auto& fx = jn.at("fixed");
        nd.fixed = {fx.at(0).get<bool>(), fx.at(1).get<bool>()};
        gs.nodes.push_back(nd);
    }
    std::sort(gs.nodes.begin(), gs.nodes.end(),
              [](const Node& a, const Node& b) { return a.id < b.id; });
    for (const auto& jm : doc.at("members")) {
        Member mem;
        mem.id = jm.at("id").get<int>();
        mem.ends = {jm.at("ends").at(0).get<int>(), jm.at("ends").at(1).get<int>()};
        gs.members.push_back(mem);
    }
    std::sort(gs.members.begin(), gs.members.end(),
              [](const Member& a, const Member& b) { return a.id < b.id; });
    for (int i = 0; i < static_cast<int>(gs.members.size()); ++i)
        if (gs.members[i].id != i)
            throw std::invalid_argument("member ids must be dense 0..m-1");
    gs.finalize();
    return gs;
}

}  // namespace trussopt
