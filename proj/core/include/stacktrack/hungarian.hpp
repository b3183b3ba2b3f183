#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "stacktrack/errors.hpp"

namespace stacktrack {

struct Assignment {
    std::vector<int> row_to_col; // -1 for unassigned rows
    double total_cost = 0.0;     // sum over assigned feasible pairs
};

// Minimum-cost assignment of min(n,m) pairs via shortest augmenting paths
// (Jonker-Volgenant), O(k^3) on the padded square matrix. Entries of +inf mark
// forbidden pairs: the solver first maximizes the number of feasible
// assignments, then minimizes their total cost; rows forced onto forbidden
// pairs come back unassigned. Finite costs must stay below 1e9 in magnitude.
inline Assignment hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = n > 0 ? static_cast<int>(cost[0].size()) : 0;
    Assignment result;
    result.row_to_col.assign(static_cast<std::size_t>(n), -1);
    if (n == 0 || m == 0) {
        return result;
    }
    for (const auto& row : cost) {
        if (static_cast<int>(row.size()) != m) {
            throw ContractError("cost matrix rows have unequal lengths");
        }
        for (double c : row) {
            if (!std::isinf(c) && !(std::fabs(c) <= 1e9)) {
                throw ContractError("finite costs must satisfy |c| <= 1e9");
            }
            if (std::isinf(c) && c < 0) {
                throw ContractError("-inf cost is not allowed");
            }
        }
    }

    // Pad to square with zero-cost dummy cells; forbidden real pairs get a
    // sentinel that dwarfs any feasible total, so fewer forbidden picks always
    // beats a cheaper sum.
    constexpr double kForbidden = 1e12;
    const int k = std::max(n, m);
    auto c = [&](int i, int j) -> double {
        if (i >= n || j >= m) {
            return 0.0;
        }
        const double v = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return std::isinf(v) ? kForbidden : v;
    };

    // 1-based potentials/links, as in the classic formulation.
    std::vector<double> u(static_cast<std::size_t>(k) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(k) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(k) + 1, 0); // col -> row
    std::vector<int> way(static_cast<std::size_t>(k) + 1, 0);
    for (int i = 1; i <= k; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(k) + 1,
                                 std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<std::size_t>(k) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = match[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= k; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    continue;
                }
                const double cur = c(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= k; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    for (int j = 1; j <= k; ++j) {
        const int i = match[static_cast<std::size_t>(j)];
        if (i >= 1 && i <= n && j <= m) {
            const double orig = cost[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
            if (!std::isinf(orig)) {
                result.row_to_col[static_cast<std::size_t>(i - 1)] = j - 1;
                result.total_cost += orig;
            }
        }
    }
    return result;
}

} // namespace stacktrack
