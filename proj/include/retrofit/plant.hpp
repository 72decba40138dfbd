#pragma once

// Partitioned subsystem G: inputs (v, d, u), outputs (w, z, y).
//
//   x' = A x + L v + W d + B u
//   w  = Gamma x,  z = S x,  y = C x
//
// and environment models mapping w -> v.

#include <string>

#include "retrofit/lti.hpp"

namespace retrofit {

using lti::ChannelMap;
using lti::StateSpace;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

class PartitionedPlant {
 public:
  /// Wraps a strictly proper system whose channel map names the input groups
  /// v, d, u and the output groups w, z, y (in that order).
  PartitionedPlant(StateSpace sys, ChannelMap cmap);

  static PartitionedPlant from_blocks(const MatrixXd& a, const MatrixXd& l,
                                      const MatrixXd& w, const MatrixXd& b,
                                      const MatrixXd& gamma, const MatrixXd& s,
                                      const MatrixXd& c);

  const StateSpace& sys() const { return sys_; }
  const ChannelMap& channels() const { return cmap_; }

  const MatrixXd& A() const { return sys_.A(); }
  MatrixXd L() const { return input_block("v"); }
  MatrixXd W() const { return input_block("d"); }
  MatrixXd B() const { return input_block("u"); }
  MatrixXd Gamma() const { return output_block("w"); }
  MatrixXd S() const { return output_block("z"); }
  MatrixXd C() const { return output_block("y"); }

  Index states() const { return sys_.states(); }
  Index nv() const { return cmap_.input("v").size; }
  Index nd() const { return cmap_.input("d").size; }
  Index nu() const { return cmap_.input("u").size; }
  Index nw() const { return cmap_.output("w").size; }
  Index nz() const { return cmap_.output("z").size; }
  Index ny() const { return cmap_.output("y").size; }

  /// Transfer from the named input groups to the named output groups.
  StateSpace channel(const std::vector<std::string>& ins,
                     const std::vector<std::string>& outs) const {
    return lti::select_channels(sys_, cmap_, ins, outs);
  }

 private:
  MatrixXd input_block(const std::string& name) const;
  MatrixXd output_block(const std::string& name) const;

  StateSpace sys_;
  ChannelMap cmap_;
};

/// Environment (or environment model): a system w -> v.
class EnvironmentModel {
 public:
  explicit EnvironmentModel(StateSpace sys) : sys_(std::move(sys)) {}

  static EnvironmentModel zero(Index nw, Index nv) {
    return EnvironmentModel(StateSpace::zero(nv, nw));
  }
  static EnvironmentModel static_gain(const MatrixXd& d) {
    return EnvironmentModel(StateSpace::gain(d));
  }

  const StateSpace& sys() const { return sys_; }
  Index states() const { return sys_.states(); }
  Index inputs() const { return sys_.inputs(); }
  Index outputs() const { return sys_.outputs(); }
  bool is_zero() const {
    return sys_.D().isZero(0) && (sys_.states() == 0 || sys_.C().isZero(0) ||
                                  sys_.B().isZero(0));
  }

 private:
  StateSpace sys_;
};

/// Throws unless `env` maps the plant's w channel to its v channel.
void require_compatible(const PartitionedPlant& g, const EnvironmentModel& env,
                        const char* what);

}  // namespace retrofit
