#pragma once

#include <Eigen/Dense>

namespace riccilab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace riccilab
