#pragma once

// Maximum-weight bipartite matching of fixed cardinality by successive
// shortest augmenting paths (min-cost flow with Johnson potentials).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "error.hpp"

namespace linkcorr {

// weights[a][b] is nullopt where (a, b) is not a candidate pair.
// Returns match_of_a (b index or -1) for a matching of exactly `cardinality` pairs
// that maximizes the total weight.
inline std::vector<int> max_weight_matching(const std::vector<std::vector<std::optional<double>>>& weights,
                                            std::size_t cardinality) {
    const std::size_t na = weights.size();
    const std::size_t nb = na ? weights.front().size() : 0;
    double wmax = -std::numeric_limits<double>::infinity();
    for (const auto& row : weights) {
        if (row.size() != nb) throw ValidationError("weight matrix rows must have equal length");
        for (const auto& w : row)
            if (w) wmax = std::max(wmax, *w);
    }
    std::vector<int> match_a(na, -1), match_b(nb, -1);
    if (cardinality == 0) return match_a;
    if (cardinality > std::min(na, nb)) throw ValidationError("requested more links than records");

    // Costs wmax - w >= 0; with the pair count fixed, minimizing cost maximizes weight.
    auto cost = [&](std::size_t a, std::size_t b) { return wmax - *weights[a][b]; };
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> pot_a(na, 0.0), pot_b(nb, 0.0);
    std::vector<double> dist_a(na), dist_b(nb);
    std::vector<int> parent_b(nb);   // left node preceding right node b on the path
    std::vector<char> done_a(na), done_b(nb);

    for (std::size_t step = 0; step < cardinality; ++step) {
        std::fill(dist_a.begin(), dist_a.end(), inf);
        std::fill(dist_b.begin(), dist_b.end(), inf);
        std::fill(done_a.begin(), done_a.end(), 0);
        std::fill(done_b.begin(), done_b.end(), 0);
        std::fill(parent_b.begin(), parent_b.end(), -1);
        for (std::size_t a = 0; a < na; ++a)
            if (match_a[a] < 0) dist_a[a] = 0.0 - pot_a[a];

        // Dense Dijkstra over left and right nodes with reduced costs.
        int sink_b = -1;
        double sink_dist = inf;
        for (;;) {
            double best = inf;
            int best_node = -1;
            bool best_is_a = true;
            for (std::size_t a = 0; a < na; ++a)
                if (!done_a[a] && dist_a[a] < best) { best = dist_a[a]; best_node = static_cast<int>(a); best_is_a = true; }
            for (std::size_t b = 0; b < nb; ++b)
                if (!done_b[b] && dist_b[b] < best) { best = dist_b[b]; best_node = static_cast<int>(b); best_is_a = false; }
            if (best_node < 0) break;
            if (best_is_a) {
                const std::size_t a = static_cast<std::size_t>(best_node);
                done_a[a] = 1;
                for (std::size_t b = 0; b < nb; ++b) {
                    if (done_b[b] || !weights[a][b] || match_a[a] == static_cast<int>(b)) continue;
                    const double nd = dist_a[a] + cost(a, b) + pot_a[a] - pot_b[b];
                    if (nd < dist_b[b]) { dist_b[b] = nd; parent_b[b] = static_cast<int>(a); }
                }
            } else {
                const std::size_t b = static_cast<std::size_t>(best_node);
                done_b[b] = 1;
                if (match_b[b] < 0) {
                    if (dist_b[b] + pot_b[b] < sink_dist) { sink_dist = dist_b[b] + pot_b[b]; sink_b = static_cast<int>(b); }
                    continue;
                }
                const std::size_t a = static_cast<std::size_t>(match_b[b]);
                if (done_a[a]) continue;
                const double nd = dist_b[b] - cost(a, b) + pot_b[b] - pot_a[a];
                if (nd < dist_a[a]) dist_a[a] = nd;
            }
        }
        if (sink_b < 0) throw ValidationError("not enough disjoint candidate pairs for the requested links");

        for (std::size_t a = 0; a < na; ++a)
            if (dist_a[a] < inf) pot_a[a] += dist_a[a];
        for (std::size_t b = 0; b < nb; ++b)
            if (dist_b[b] < inf) pot_b[b] += dist_b[b];

        // Augment: walk back from the free right node.
        int b = sink_b;
        while (b >= 0) {
            const int a = parent_b[b];
            const int prev_b = match_a[a];
            match_a[a] = b;
            match_b[b] = a;
            b = prev_b;
        }
    }
    return match_a;
}

} // namespace linkcorr
