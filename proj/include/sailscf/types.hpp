#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sailscf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

/// Thrown on contract violations (bad input files, invalid geometries,
/// shape mismatches, non-finite data).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kAngstromToBohr = 1.8897259886;

} // namespace sailscf
