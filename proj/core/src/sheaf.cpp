#include "csnn/sheaf.hpp"

#include <cmath>

namespace csnn {

double softplus(double x) {
    // log1p(exp(x)) without overflow for large x.
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

Eigen::MatrixXd householder_orthogonal(const Eigen::MatrixXd& reflections) {
    const int d = static_cast<int>(reflections.rows());
    const int k = static_cast<int>(reflections.cols());
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, d);
    for (int r = 0; r < k; ++r) {
        Eigen::VectorXd v = reflections.col(r);
        const double n2 = v.squaredNorm();
        if (std::sqrt(n2) < kHouseholderDegenerateNorm) continue;
        // Q <- Q (I - 2 v v^T / ||v||^2), applied without forming H.
        q -= (2.0 / n2) * (q * v) * v.transpose();
    }
    return q;
}

ConformalMap conformal_from_params(double scale_param,
                                   const Eigen::MatrixXd& reflections,
                                   bool frozen_zero) {
    ConformalMap m;
    m.orthogonal = householder_orthogonal(reflections);
    m.scale = frozen_zero ? 0.0 : softplus(scale_param);
    return m;
}

Role role_of(const ConformalMapPair& pair, double tol) {
    const bool s_zero = pair.source.scale <= tol;
    const bool t_zero = pair.target.scale <= tol;
    if (s_zero && t_zero) return Role::Isolate;
    if (s_zero) return Role::Listen;
    if (t_zero) return Role::Broadcast;
    return Role::Standard;
}

const char* role_name(Role r) {
    switch (r) {
        case Role::Standard: return "STANDARD";
        case Role::Listen: return "LISTEN";
        case Role::Broadcast: return "BROADCAST";
        case Role::Isolate: return "ISOLATE";
    }
    return "?";
}

}  // namespace csnn
