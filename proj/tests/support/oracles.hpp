#ifndef CTDD_TESTS_ORACLES_HPP
#define CTDD_TESTS_ORACLES_HPP

#include <Eigen/Dense>

#include "ctdd/enumerable.hpp"
#include "ctdd/forward_process.hpp"

namespace ctdd::testing {

// Scaling-and-squaring Taylor-series matrix exponential, independent of the
// spectral path it is used to check.
Eigen::MatrixXd expm_series(const Eigen::MatrixXd& A);

// Full joint forward generator beta * R_b^{1:D} on S^D states.
Eigen::MatrixXd joint_forward_generator(const ForwardProcess& fp, double t);

// Full joint exact reverse generator at time t for an enumerable p_data.
Eigen::MatrixXd joint_reverse_generator(const ForwardProcess& fp,
                                        const EnumerableDistribution& data, double t);

// Random full-support distribution over the joint space (entries >= floor).
EnumerableDistribution random_joint_distribution(int S, int D, uint64_t seed,
                                                 double floor = 0.01);

// Deterministic toy sequence corpus: `songs` motifs of length D over states
// drawn from a narrow per-song note set, values in [0, S).
std::vector<State> toy_sequence_corpus(int songs, int D, int S, uint64_t seed);

}  // namespace ctdd::testing

#endif
