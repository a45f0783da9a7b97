#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace prband {

enum class NeighborSearch { Auto, Brute, KdTree };

namespace detail {

struct Neighbor {
    double d2;
    std::uint32_t idx;
    bool operator<(const Neighbor& o) const {
        return d2 != o.d2 ? d2 < o.d2 : idx < o.idx;
    }
};

inline double dist2(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

/// Fixed-capacity list of the k best (d2, idx) pairs, kept sorted. k is
/// small here (single digits), so insertion beats a heap.
class BestK {
  public:
    explicit BestK(int k) : k_(static_cast<std::size_t>(k)) { items_.reserve(k_); }

    bool full() const { return items_.size() == k_; }
    const Neighbor& worst() const { return items_.back(); }

    void offer(Neighbor n) {
        if (full() && !(n < items_.back())) return;
        auto pos = std::upper_bound(items_.begin(), items_.end(), n);
        if (full()) items_.pop_back();
        items_.insert(pos, n);
    }

    const std::vector<Neighbor>& items() const { return items_; }

  private:
    std::size_t k_;
    std::vector<Neighbor> items_;
};

/// k-d tree over a fixed point set. Median splits on cycling axes; ties on
/// the split coordinate are ordered by point index so construction and
/// queries are fully deterministic.
class KdTree {
  public:
    KdTree(const double* pts, std::size_t n, int dim) : pts_(pts), n_(n), dim_(dim) {
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<std::uint32_t>(i);
        nodes_.reserve(2 * n / kLeafSize + 2);
        root_ = build(0, n, 0);
    }

    /// k nearest neighbors of pts[query], excluding query itself, sorted by
    /// (squared distance, index).
    void query(std::uint32_t query, BestK& best) const {
        search(root_, query, best);
    }

  private:
    static constexpr std::size_t kLeafSize = 16;
    static constexpr int kNone = -1;

    struct Node {
        double split = 0.0;
        int axis = 0;
        int left = kNone;
        int right = kNone;
        std::uint32_t begin = 0;  // leaf range into order_
        std::uint32_t end = 0;
        bool leaf = false;
    };

    int build(std::size_t begin, std::size_t end, int depth) {
        Node node;
        if (end - begin <= kLeafSize) {
            node.leaf = true;
            node.begin = static_cast<std::uint32_t>(begin);
            node.end = static_cast<std::uint32_t>(end);
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size() - 1);
        }
        const int axis = depth % dim_;
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = pts_[a * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(axis)];
                             const double cb = pts_[b * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(axis)];
                             return ca != cb ? ca < cb : a < b;
                         });
        node.axis = axis;
        node.split = pts_[order_[mid] * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(axis)];
        nodes_.push_back(node);
        const auto self = static_cast<int>(nodes_.size() - 1);
        const int l = build(begin, mid, depth + 1);
        const int r = build(mid, end, depth + 1);
        nodes_[static_cast<std::size_t>(self)].left = l;
        nodes_[static_cast<std::size_t>(self)].right = r;
        return self;
    }

    void search(int node_id, std::uint32_t query, BestK& best) const {
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        const double* q = pts_ + query * static_cast<std::size_t>(dim_);
        if (node.leaf) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t idx = order_[i];
                if (idx == query) continue;
                best.offer({dist2(q, pts_ + idx * static_cast<std::size_t>(dim_), dim_), idx});
            }
            return;
        }
        const double delta = q[node.axis] - node.split;
        const int near = delta < 0 ? node.left : node.right;
        const int far = delta < 0 ? node.right : node.left;
        search(near, query, best);
        // Descend into the far side unless every point there is strictly
        // worse than the current k-th; on exact distance ties a smaller
        // index may still qualify.
        if (!best.full() || delta * delta <= best.worst().d2) search(far, query, best);
    }

    const double* pts_;
    std::size_t n_;
    int dim_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    int root_ = kNone;
};

}  // namespace detail

/// Exact k nearest neighbors for every point of a pool, self excluded.
/// Neighbors are ordered by (squared distance, index); the brute-force and
/// k-d tree paths return identical results, tie handling included.
inline std::vector<std::uint32_t> all_knn(const std::vector<double>& points, std::size_t n,
                                          int dim, int k,
                                          NeighborSearch method = NeighborSearch::Auto) {
    if (dim < 1) throw std::invalid_argument("all_knn: dim must be >= 1");
    if (k < 1 || static_cast<std::size_t>(k) >= n)
        throw std::invalid_argument("all_knn: need 1 <= k < n");
    if (points.size() != n * static_cast<std::size_t>(dim))
        throw std::invalid_argument("all_knn: point buffer size mismatch");

    if (method == NeighborSearch::Auto)
        method = n > 512 ? NeighborSearch::KdTree : NeighborSearch::Brute;

    std::vector<std::uint32_t> out(n * static_cast<std::size_t>(k));
    if (method == NeighborSearch::Brute) {
        for (std::size_t q = 0; q < n; ++q) {
            detail::BestK best(k);
            const double* qp = points.data() + q * static_cast<std::size_t>(dim);
            for (std::size_t i = 0; i < n; ++i) {
                if (i == q) continue;
                best.offer({detail::dist2(qp, points.data() + i * static_cast<std::size_t>(dim), dim),
                            static_cast<std::uint32_t>(i)});
            }
            for (int j = 0; j < k; ++j)
                out[q * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] =
                    best.items()[static_cast<std::size_t>(j)].idx;
        }
    } else {
        detail::KdTree tree(points.data(), n, dim);
        for (std::size_t q = 0; q < n; ++q) {
            detail::BestK best(k);
            tree.query(static_cast<std::uint32_t>(q), best);
            for (int j = 0; j < k; ++j)
                out[q * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] =
                    best.items()[static_cast<std::size_t>(j)].idx;
        }
    }
    return out;
}

}  // namespace prband
