#ifndef GLDB_OPTIMIZER_HPP
#define GLDB_OPTIMIZER_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gldb/model.hpp"

namespace gldb {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Dense tensors update every step; object-table
// rows carry their own moments and step counts and update only when touched.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(ModelParams& params, const Gradients& grads);

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return t_; }

  // state accessors for checkpointing
  std::vector<Eigen::MatrixXd>& dense_m() { return m_; }
  std::vector<Eigen::MatrixXd>& dense_v() { return v_; }
  Eigen::MatrixXd& table_m() { return table_m_; }
  Eigen::MatrixXd& table_v() { return table_v_; }
  std::vector<std::int64_t>& row_steps() { return row_t_; }
  std::int64_t& step_count() { return t_; }
  AdamConfig& mutable_config() { return cfg_; }

 private:
  void ensure_state(const ModelParams& params);

  AdamConfig cfg_;
  std::vector<Eigen::MatrixXd> m_, v_;
  Eigen::MatrixXd table_m_, table_v_;
  std::vector<std::int64_t> row_t_;
  std::int64_t t_ = 0;
};

}  // namespace gldb

#endif  // GLDB_OPTIMIZER_HPP
