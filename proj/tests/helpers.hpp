#pragma once

#include "repbc/env.hpp"
#include "repbc/mdp.hpp"

#include <vector>

namespace repbc::testing {

// Deterministic MDP from next[s][a]; one-hot transition rows.
inline TabularMdp chain_mdp(const std::vector<std::vector<int>>& next, Matrix reward, Vector initial, double gamma) {
    const int S = static_cast<int>(next.size());
    const int A = static_cast<int>(next[0].size());
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(S) * A, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) t(s * A + a, next[s][a]) = 1.0;
    const double r_max = std::max(1.0, reward.cwiseAbs().maxCoeff());
    return TabularMdp(t, std::move(reward), std::move(initial), gamma, r_max);
}

inline Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (double x : row) m(r, c++) = x;
        ++r;
    }
    return m;
}

inline Dataset make_demos(const std::vector<std::pair<int, int>>& pairs) {
    Dataset d;
    d.kind = DatasetKind::demos;
    int t = 0;
    for (auto [s, a] : pairs) d.records.push_back({0, t++, s, a, 0.0, s});
    return d;
}

}  // namespace repbc::testing
