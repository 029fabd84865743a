#include "gldb/optimizer.hpp"

namespace gldb {

void Adam::ensure_state(const ModelParams& params) {
  if (m_.size() != params.dense.size()) {
    m_.clear();
    v_.clear();
    for (const auto& [name, t] : params.dense) {
      m_.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    }
  }
  Eigen::Index rows = params.object_table.rows();
  if (table_m_.rows() < rows) {
    Eigen::Index old_rows = table_m_.rows();
    table_m_.conservativeResize(rows, params.object_table.cols());
    table_v_.conservativeResize(rows, params.object_table.cols());
    table_m_.bottomRows(rows - old_rows).setZero();
    table_v_.bottomRows(rows - old_rows).setZero();
    row_t_.resize(static_cast<std::size_t>(rows), 0);
  }
}

void Adam::step(ModelParams& params, const Gradients& grads) {
  if (grads.dense.size() != params.dense.size()) {
    throw_internal("ShapeMismatch", "gradient tensor count does not match parameters");
  }
  ensure_state(params);
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.dense.size(); ++i) {
    Eigen::MatrixXd& theta = params.dense[i].second;
    const Eigen::MatrixXd& g = grads.dense[i];
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) {
      throw_internal("ShapeMismatch", "gradient shape mismatch for " + params.dense[i].first);
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Eigen::MatrixXd m_hat = m_[i] / bc1;
    Eigen::MatrixXd v_hat = v_[i] / bc2;
    theta -= cfg_.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
  }
  for (std::uint32_t r : grads.touched_rows) {
    if (static_cast<Eigen::Index>(r) >= params.object_table.rows()) {
      throw_internal("ShapeMismatch", "touched row beyond object table");
    }
    std::int64_t rt = ++row_t_[r];
    double rbc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(rt));
    double rbc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(rt));
    auto g = grads.table.row(r);
    table_m_.row(r) = cfg_.beta1 * table_m_.row(r) + (1.0 - cfg_.beta1) * g;
    table_v_.row(r) = cfg_.beta2 * table_v_.row(r) + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Eigen::RowVectorXd m_hat = table_m_.row(r) / rbc1;
    Eigen::RowVectorXd v_hat = table_v_.row(r) / rbc2;
    params.object_table.row(r) -=
        cfg_.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
  }
  if (!params.all_finite()) {
    throw_internal("NonFiniteParams", "parameters became non-finite after Adam step");
  }
}

}  // namespace gldb
