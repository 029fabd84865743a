#include "gldb/model.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

namespace gldb {

void ModelConfig::validate() const {
  if (n_layers < 1) throw_usage("BadConfig", "n_layers must be >= 1");
  if (n_heads < 1 || d_hidden % n_heads != 0) {
    throw_usage("BadConfig", "d_hidden must be divisible by n_heads");
  }
  if (d_obj < 1 || d_hidden < 1) throw_usage("BadConfig", "embedding dims must be positive");
  if (!(init_scale > 0.0)) throw_usage("BadConfig", "init_scale must be positive");
}

FusionMode fusion_from_name(const std::string& s) {
  if (s == "plain") return FusionMode::Plain;
  if (s == "gated") return FusionMode::Gated;
  throw_usage("BadConfig", "unknown fusion mode '" + s + "'");
}
const char* fusion_name(FusionMode m) { return m == FusionMode::Plain ? "plain" : "gated"; }

ReduceMode reduce_from_name(const std::string& s) {
  if (s == "diff") return ReduceMode::Diff;
  if (s == "concat") return ReduceMode::Concat;
  if (s == "hadamard") return ReduceMode::Hadamard;
  throw_usage("BadConfig", "unknown reduce mode '" + s + "'");
}
const char* reduce_name(ReduceMode m) {
  switch (m) {
    case ReduceMode::Diff: return "diff";
    case ReduceMode::Concat: return "concat";
    case ReduceMode::Hadamard: return "hadamard";
  }
  return "?";
}

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double std_dev, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.gaussian() * std_dev;
  }
  return m;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, int d_event_in, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.d_event_in = d_event_in;
  int dh = cfg.d_hidden;
  int d_head = dh / cfg.n_heads;
  int d_red = cfg.reduce == ReduceMode::Concat ? 2 * dh : dh;

  auto weight = [&](const std::string& name, int in, int out) {
    p.dense.emplace_back(name, gaussian_matrix(in, out, std::sqrt(1.0 / in), rng));
  };
  auto bias = [&](const std::string& name, int out) {
    p.dense.emplace_back(name, Eigen::MatrixXd::Zero(1, out));
  };
  auto attn = [&](const std::string& name) {
    p.dense.emplace_back(name, gaussian_matrix(d_head, 1, cfg.init_scale, rng));
  };

  weight("obj_proj.w1", cfg.d_obj, dh);
  bias("obj_proj.b1", dh);
  weight("obj_proj.w2", dh, dh);
  bias("obj_proj.b2", dh);
  weight("evt_proj.w1", d_event_in, dh);
  bias("evt_proj.b1", dh);
  weight("evt_proj.w2", dh, dh);
  bias("evt_proj.b2", dh);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) {
      std::string base = "gat.l" + std::to_string(l) + ".h" + std::to_string(h);
      weight(base + ".W", dh, d_head);
      attn(base + ".aL");
      attn(base + ".aR");
    }
  }
  p.dense.emplace_back("alpha_gate", Eigen::MatrixXd::Zero(1, 1));
  weight("head.w1", d_red, dh);
  bias("head.b1", dh);
  weight("head.w2", dh, 1);
  bias("head.b2", 1);

  p.object_table = Eigen::MatrixXd(0, cfg.d_obj);
  return p;
}

Eigen::MatrixXd& ModelParams::tensor(const std::string& name) {
  for (auto& [n, m] : dense) {
    if (n == name) return m;
  }
  throw_internal("MissingTensor", name);
}

const Eigen::MatrixXd& ModelParams::tensor(const std::string& name) const {
  for (const auto& [n, m] : dense) {
    if (n == name) return m;
  }
  throw_internal("MissingTensor", name);
}

void ModelParams::ensure_object_rows(std::uint32_t count, Rng& rng) {
  Eigen::Index old_rows = object_table.rows();
  if (static_cast<Eigen::Index>(count) <= old_rows) return;
  object_table.conservativeResize(count, config.d_obj);
  for (Eigen::Index r = old_rows; r < object_table.rows(); ++r) {
    for (Eigen::Index c = 0; c < object_table.cols(); ++c) {
      object_table(r, c) = rng.gaussian() * config.init_scale;
    }
  }
}

bool ModelParams::all_finite() const {
  for (const auto& [n, m] : dense) {
    if (!m.allFinite()) return false;
  }
  return object_table.allFinite();
}

std::string ModelParams::checksum() const {
  std::string buf;
  auto feed = [&buf](const Eigen::MatrixXd& m) {
    const char* p = reinterpret_cast<const char*>(m.data());
    buf.append(p, static_cast<std::size_t>(m.size()) * sizeof(double));
  };
  for (const auto& [n, m] : dense) {
    buf.append(n);
    feed(m);
  }
  feed(object_table);
  return sha256_hex(buf);
}

namespace {

struct MlpVars {
  Var w1, b1, w2, b2;
};

Var mlp2(Var x, const MlpVars& p) {
  Var h = elu(add_rowvec(matmul(x, p.w1), p.b1));
  return add_rowvec(matmul(h, p.w2), p.b2);
}

}  // namespace

ForwardResult Model::run(const DynamicGraph& graph, const WindowView& view,
                         const TextEmbedder& embedder, const TimeEncodingSpec& tspec,
                         const std::vector<CandidateEvent>& candidates,
                         const std::vector<PairRef>& pairs, const std::vector<int>* labels,
                         bool want_diagnostics) const {
  const ModelConfig& cfg = params_.config;
  ForwardResult res;
  res.tape = std::make_unique<Tape>();
  Tape& tape = *res.tape;

  // parameter leaves
  std::vector<Var>& pv = res.dense_vars;
  pv.reserve(params_.dense.size());
  for (const auto& [name, m] : params_.dense) pv.push_back(leaf(tape, m));
  auto var_of = [&](const std::string& name) -> Var {
    for (std::size_t i = 0; i < params_.dense.size(); ++i) {
      if (params_.dense[i].first == name) return pv[i];
    }
    throw_internal("MissingTensor", name);
  };

  const std::uint32_t n_obj = view.num_objects;
  const std::size_t n_vis = view.visible_events.size();
  if (params_.object_table.rows() < static_cast<Eigen::Index>(n_obj)) {
    throw_internal("MissingRow", "object table smaller than view object count");
  }
  res.table_var = leaf(tape, params_.object_table.topRows(n_obj));

  MlpVars obj_proj{var_of("obj_proj.w1"), var_of("obj_proj.b1"), var_of("obj_proj.w2"),
                   var_of("obj_proj.b2")};
  MlpVars evt_proj{var_of("evt_proj.w1"), var_of("evt_proj.b1"), var_of("evt_proj.w2"),
                   var_of("evt_proj.b2")};
  MlpVars head{var_of("head.w1"), var_of("head.b1"), var_of("head.w2"), var_of("head.b2")};
  Var alpha = var_of("alpha_gate");

  Var h_obj0;
  bool have_objects = n_obj > 0;
  if (have_objects) h_obj0 = mlp2(res.table_var, obj_proj);

  // event features: visible context events first, then candidates
  std::size_t n_evt_rows = n_vis + candidates.size();
  Var h_evt_all;
  if (n_evt_rows > 0) {
    Eigen::MatrixXd feats(static_cast<Eigen::Index>(n_evt_rows), params_.d_event_in);
    for (std::size_t i = 0; i < n_vis; ++i) {
      const EventMeta& meta = graph.event_meta(view.visible_events[i]);
      feats.row(static_cast<Eigen::Index>(i)) =
          event_feature(meta.text, meta.timestamp, embedder, tspec).transpose();
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      feats.row(static_cast<Eigen::Index>(n_vis + i)) =
          event_feature(candidates[i].text, candidates[i].timestamp, embedder, tspec).transpose();
    }
    h_evt_all = mlp2(leaf(tape, std::move(feats)), evt_proj);
  }

  // message passing over objects [0, n_obj) and context events [n_obj, n_obj+n_vis)
  Var h = h_obj0;
  if (n_vis > 0) {
    std::vector<int> ctx_rows(n_vis);
    std::iota(ctx_rows.begin(), ctx_rows.end(), 0);
    Var h_ctx = gather_rows(h_evt_all, ctx_rows);
    h = have_objects ? concat_rows(h_obj0, h_ctx) : h_ctx;
  }

  std::size_t n_nodes = n_obj + n_vis;
  Var h_final = h;
  if (n_nodes > 0) {
    std::vector<std::vector<int>> neighbors(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) neighbors[i].push_back(static_cast<int>(i));
    for (std::size_t p = 0; p < n_vis; ++p) {
      int evt_node = static_cast<int>(n_obj + p);
      for (std::uint32_t obj : graph.event_objects(view.visible_events[p])) {
        neighbors[obj].push_back(evt_node);
        neighbors[static_cast<std::size_t>(evt_node)].push_back(static_cast<int>(obj));
      }
    }
    for (int l = 0; l < cfg.n_layers; ++l) {
      std::vector<Var> heads;
      heads.reserve(static_cast<std::size_t>(cfg.n_heads));
      for (int hd = 0; hd < cfg.n_heads; ++hd) {
        std::string base = "gat.l" + std::to_string(l) + ".h" + std::to_string(hd);
        Var z = matmul(h_final, var_of(base + ".W"));
        heads.push_back(
            gat_attention(z, var_of(base + ".aL"), var_of(base + ".aR"), neighbors,
                          cfg.leaky_slope));
      }
      Var combined = cfg.n_heads == 1 ? heads[0] : concat_cols(heads);
      h_final = l + 1 < cfg.n_layers ? elu(combined) : combined;
    }
  }

  if (want_diagnostics) {
    if (have_objects) {
      res.obj_e0 = h_obj0.val();
      res.obj_egat = h_final.val().topRows(n_obj);
    }
    if (n_vis > 0) {
      res.evt_ctx = h_evt_all.val().topRows(static_cast<Eigen::Index>(n_vis));
    }
  }

  if (!pairs.empty()) {
    std::vector<int> obj_rows(pairs.size());
    std::vector<int> evt_rows(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const PairRef& pr = pairs[i];
      if (pr.object_id >= n_obj) throw_internal("MissingRow", "pair references unknown object");
      obj_rows[i] = static_cast<int>(pr.object_id);
      std::size_t row = pr.is_candidate ? n_vis + pr.event_pos : pr.event_pos;
      if (row >= n_evt_rows) throw_internal("MissingRow", "pair references unknown event");
      evt_rows[i] = static_cast<int>(row);
    }
    Var e_gat = gather_rows(h_final, obj_rows);
    Var e_obj;
    switch (cfg.fusion) {
      case FusionMode::Plain:
        e_obj = e_gat;
        break;
      case FusionMode::Gated:
        e_obj = gated_fuse(gather_rows(h_obj0, obj_rows), e_gat, alpha);
        break;
    }
    Var h_e = gather_rows(h_evt_all, evt_rows);
    Var reduced;
    switch (cfg.reduce) {
      case ReduceMode::Diff: reduced = sub(e_obj, h_e); break;
      case ReduceMode::Concat: reduced = concat_cols({e_obj, h_e}); break;
      case ReduceMode::Hadamard: reduced = cmul(e_obj, h_e); break;
    }
    res.logits = mlp2(reduced, head);
    res.scores.resize(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      double z = res.logits.val()(static_cast<Eigen::Index>(i), 0);
      res.scores[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    if (labels) {
      res.loss = balanced_bce_logits(res.logits, *labels);
      res.loss_value = res.loss.val()(0, 0);
      res.has_loss = true;
    }
  }

  return res;
}

Gradients Model::backward(ForwardResult& result) const {
  if (!result.has_loss) throw_internal("TapeError", "backward without a loss node");
  result.tape->backward(result.loss.idx);
  Gradients g;
  g.dense.reserve(result.dense_vars.size());
  for (const auto& v : result.dense_vars) g.dense.push_back(v.grad());
  g.table = Eigen::MatrixXd::Zero(params_.object_table.rows(), params_.object_table.cols());
  const Eigen::MatrixXd& tg = result.table_var.grad();
  g.table.topRows(tg.rows()) = tg;
  for (Eigen::Index r = 0; r < tg.rows(); ++r) {
    if (tg.row(r).cwiseAbs().maxCoeff() > 0.0) {
      g.touched_rows.push_back(static_cast<std::uint32_t>(r));
    }
  }
  return g;
}

GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed, int n_coords, double eps) {
  cfg.validate();
  Rng rng(derive_seed(seed, 101));

  TextEmbedderSpec espec;
  espec.dim = 16;
  TextEmbedder embedder(espec);
  TimeEncodingSpec tspec;
  tspec.dim = 4;
  tspec.t_ref = 0;

  // small committed graph: 4 objects, 3 events, plus one candidate entry
  DynamicGraph graph;
  std::vector<LogEntry> entries(4);
  entries[0] = LogEntry{0, 0, "disk read started", {"alpha", "beta"}, {}, std::nullopt};
  entries[1] = LogEntry{1, 60, "disk read finished", {"beta", "gamma"}, {}, std::nullopt};
  entries[2] = LogEntry{2, 120, "cache flushed", {"alpha", "delta"}, {}, std::nullopt};
  entries[3] = LogEntry{3, 180, "disk write started", {"alpha", "gamma"}, {}, std::nullopt};

  ModelParams params = ModelParams::init(cfg, espec.dim + tspec.dim, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    EntrySubgraph sub = graph.build_subgraph(entries[i]);
    graph.merge_objects(sub);
    graph.commit_entry(sub);
  }
  EntrySubgraph cand_sub = graph.build_subgraph(entries[3]);
  graph.merge_objects(cand_sub);
  params.ensure_object_rows(graph.object_count(), rng);

  WindowView view = graph.window_view(100);
  std::vector<CandidateEvent> candidates{{entries[3].event_text, entries[3].timestamp}};
  std::vector<PairRef> pairs;
  std::vector<int> labels;
  for (const auto& node : cand_sub.objects) {
    pairs.push_back(PairRef{node.id, true, 0});
    labels.push_back(1);
  }
  Rng neg_rng(derive_seed(seed, 102));
  for (auto& [obj, evt] : graph.enumerate_non_edges(view, neg_rng, 4)) {
    std::uint32_t pos = 0;
    for (std::size_t i = 0; i < view.visible_events.size(); ++i) {
      if (view.visible_events[i] == evt) pos = static_cast<std::uint32_t>(i);
    }
    pairs.push_back(PairRef{obj, false, pos});
    labels.push_back(0);
  }

  Model model(std::move(params));
  auto loss_at = [&]() {
    ForwardResult r = model.run(graph, view, embedder, tspec, candidates, pairs, &labels);
    return r.loss_value;
  };

  ForwardResult base = model.run(graph, view, embedder, tspec, candidates, pairs, &labels);
  Gradients analytic = model.backward(base);

  // flatten the coordinate space: dense tensors then the object table
  std::vector<std::pair<int, Eigen::Index>> space;  // (tensor idx, size); -1 = table
  std::size_t total = 0;
  for (std::size_t i = 0; i < model.params().dense.size(); ++i) {
    space.emplace_back(static_cast<int>(i), model.params().dense[i].second.size());
    total += static_cast<std::size_t>(model.params().dense[i].second.size());
  }
  space.emplace_back(-1, model.params().object_table.size());
  total += static_cast<std::size_t>(model.params().object_table.size());

  Rng pick(derive_seed(seed, 103));
  std::vector<std::size_t> chosen;
  std::unordered_set<std::size_t> used;
  std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(n_coords), total);
  while (chosen.size() < want) {
    std::size_t c = pick.uniform_index(total);
    if (used.insert(c).second) chosen.push_back(c);
  }

  GradCheckReport report;
  for (std::size_t flat : chosen) {
    std::size_t offset = flat;
    int tensor_idx = -2;
    for (const auto& [ti, size] : space) {
      if (offset < static_cast<std::size_t>(size)) {
        tensor_idx = ti;
        break;
      }
      offset -= static_cast<std::size_t>(size);
    }
    Eigen::MatrixXd& target = tensor_idx >= 0
                                  ? model.params().dense[static_cast<std::size_t>(tensor_idx)].second
                                  : model.params().object_table;
    double* cell = target.data() + offset;
    double saved = *cell;
    *cell = saved + eps;
    double lp = loss_at();
    *cell = saved - eps;
    double lm = loss_at();
    *cell = saved;
    double numeric = (lp - lm) / (2.0 * eps);
    double a = tensor_idx >= 0
                   ? analytic.dense[static_cast<std::size_t>(tensor_idx)].data()[offset]
                   : analytic.table.data()[offset];
    double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    GradCheckEntry entry;
    entry.tensor = tensor_idx >= 0
                       ? model.params().dense[static_cast<std::size_t>(tensor_idx)].first
                       : "object_table";
    entry.coord = static_cast<int>(offset);
    entry.analytic = a;
    entry.numeric = numeric;
    entry.rel_err = std::abs(a - numeric) / denom;
    report.max_rel_err = std::max(report.max_rel_err, entry.rel_err);
    report.entries.push_back(std::move(entry));
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const GradCheckEntry& x, const GradCheckEntry& y) { return x.rel_err > y.rel_err; });
  return report;
}

}  // namespace gldb
