// Ground structures for planar truss optimization: grid generation,
// length-capped member enumeration (overlaps retained), node-member
// incidence, overlap detection and hinge-cancellation analysis.
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace trussopt {

struct Node {
    int id = 0;
    Eigen::Vector2d coord = Eigen::Vector2d::Zero();  // meters
    std::array<bool, 2> fixed = {false, false};       // per-axis support flags

    bool pinned() const { return fixed[0] && fixed[1]; }
    bool free() const { return !fixed[0] && !fixed[1]; }
};

struct Member {
    int id = 0;
    std::array<int, 2> ends = {0, 0};  // node ids, ends[0] < ends[1]
    double length = 0.0;               // c_i, meters

    // Direction cosines stored per end; the sparse equilibrium vector b_i
    // places -dir at ends[0] and +dir at ends[1], restricted to free DOFs.
    Eigen::Vector2d dir = Eigen::Vector2d::Zero();
};

using OverlapPair = std::pair<int, int>;  // member ids, first < second

class GroundStructure {
  public:
    std::vector<Node> nodes;
    std::vector<Member> members;

    int free_node_count() const { return l_; }
    int dof_count() const { return d_; }
    int member_count() const { return static_cast<int>(members.size()); }

    // Maps node id -> index among free nodes (-1 for supported nodes).
    int free_index(int node_id) const { return free_index_[node_id]; }
    // Maps node id -> first DOF index (-1 for supported nodes); DOFs come in
    // (x, y) pairs assigned in node-id order over the free nodes.
    int dof_index(int node_id) const { return dof_index_[node_id]; }
    int free_node_id(int free_idx) const { return free_ids_[free_idx]; }

    // I(j): member ids touching free node j (j = free index).
    const std::vector<int>& incident_members(int free_idx) const { return incidence_[free_idx]; }

    // Z in R^{l x m}, Z_ji = 1 iff member i touches free node j.
    const Eigen::SparseMatrix<double>& node_member_matrix() const { return Z_; }

    // Collinear member pairs where the segments share more than a point.
    const std::set<OverlapPair>& overlap_pairs() const { return overlaps_; }

    // Sparse equilibrium vector b_i of member i over the free DOFs.
    Eigen::SparseVector<double> equilibrium_vector(int member_id) const;

    // z = Z x (node activity).
    Eigen::VectorXd node_activity(const Eigen::VectorXd& x) const;

    // Total member length vector c (length m).
    Eigen::VectorXd lengths() const;

    // Recomputes lengths, direction cosines, incidence, Z and overlap pairs
    // from nodes/members. Throws std::invalid_argument on inconsistent data.
    void finalize();

    // Copy with the longer member of every overlapping pair removed
    // (classic overlap-free ground structure).
    GroundStructure without_overlaps() const;

  private:
    int l_ = 0;
    int d_ = 0;
    std::vector<int> free_index_;
    std::vector<int> dof_index_;
    std::vector<int> free_ids_;
    std::vector<std::vector<int>> incidence_;
    Eigen::SparseMatrix<double> Z_;
    std::set<OverlapPair> overlaps_;
};

struct TrussDesign {
    Eigen::VectorXd x;                  // cross-sectional areas, m^2
    double volume = 0.0;                // c^T x, m^3
    std::optional<double> compliance;   // joules, set once evaluated

    // Free nodes with activity above the threshold.
    int active_free_nodes(const GroundStructure& gs, double eps_node) const;
};

// Nodes of an (NX+1) x (NY+1) grid with the given spacing; the leftmost
// column is pin-supported. Ordering is row-major from the bottom-left.
std::vector<Node> generate_grid(int nx, int ny, double spacing);

// All node pairs with Euclidean length <= lmax (+1e-9 slack); overlapping
// members are retained. Ordered lexicographically by (min end, max end).
std::vector<Member> generate_members(const std::vector<Node>& nodes, double lmax);

// Convenience: grid nodes + capped members, finalized.
GroundStructure make_grid_structure(int nx, int ny, double lmax, double spacing = 1.0);

// Unordered pairs of collinear members where one segment covers interior
// points of the other. Symmetric, irreflexive.
std::set<OverlapPair> detect_overlaps(const std::vector<Member>& members,
                                      const std::vector<Node>& nodes);

struct HingeCancelResult {
    TrussDesign design;        // merged design when gs supports it, else input
    int free_nodes_after = 0;  // active free nodes after transitive cancellation
    int hinges_removed = 0;
    bool rewrote_design = false;
};

// Identifies free nodes joining exactly two active collinear members of equal
// area and counts free nodes after removing such hinge nodes transitively.
// Chains are merged onto an existing longer member when the ground structure
// contains one; otherwise only the count is reported.
HingeCancelResult hinge_cancel(const GroundStructure& gs, const TrussDesign& design,
                               double tol_area);

// JSON round-trip of the geometry: {nodes:[{id,x,y,fixed:[..]}],
// members:[{id,ends:[a,b]}], units:"SI"}. Derived data is never serialized.
std::string to_json(const GroundStructure& gs);
GroundStructure ground_structure_from_json(const std::string& text);

}  // namespace trussopt
