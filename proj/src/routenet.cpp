#include "netperf/routenet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "netperf/random.hpp"

namespace netperf::gnn {

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

double softplus(double a) { return a > 30.0 ? a : std::log1p(std::exp(a)); }

bool is_bias(const std::string& name) { return name[name.find('.') + 1] == 'b'; }

double scale(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

std::array<double, kFlowFeatures> raw_flow(const TrafficDescriptor& desc) {
  auto v = desc.encode_vector(1.0);
  v[5] = std::log1p(std::max(0.0, v[5]));
  v[8] = std::log1p(std::max(0.0, v[8]));
  v[6] = -std::log1p(-std::min(std::abs(v[6]), 0.999));  // memory length scale
  return v;
}

constexpr int kFirstNumericFlow = kNumTrafficModels;

struct Cell {
  const Block* W;
  const Block* U;
  const Block* b;
};

Cell cell_blocks(const Params& p, const std::string& prefix) {
  return {&p.block(prefix + ".W"), &p.block(prefix + ".U"), &p.block(prefix + ".b")};
}

struct GruCache {
  Mat x, h, z, r, ht;
};

template <class D>
Mat sigmoid_of(const Eigen::MatrixBase<D>& a) {
  return a.unaryExpr([](double v) { return sigmoid(v); });
}

/// One GRU step applied to every column of x and h.
Mat gru_step(const Params& p, const Cell& c, const Mat& x, const Mat& h, GruCache* cache) {
  const int d = p.d();
  const auto W = p.mat(*c.W);
  const auto U = p.mat(*c.U);
  const auto b = p.mat(*c.b);
  if (x.rows() != W.cols() || h.rows() != d || x.cols() != h.cols()) throw Error("gru_cell: shape mismatch");
  Mat a = W * x;
  a.colwise() += b.col(0);
  a.topRows(2 * d).noalias() += U.topRows(2 * d) * h;
  Mat z = sigmoid_of(a.topRows(d));
  Mat r = sigmoid_of(a.middleRows(d, d));
  Mat ht = a.bottomRows(d);
  ht.noalias() += U.bottomRows(d) * r.cwiseProduct(h);
  ht = ht.array().tanh().matrix();
  Mat out = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(ht);
  if (cache) {
    cache->x = x;
    cache->h = h;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->ht = std::move(ht);
  }
  return out;
}

void gru_backward(const Params& p, const Cell& c, const GruCache& k, const Mat& g, std::vector<double>& grad,
                  Mat& dx, Mat& dh) {
  const int d = p.d();
  const auto W = p.mat(*c.W);
  const auto U = p.mat(*c.U);
  Eigen::Map<Mat> gW(grad.data() + c.W->offset, c.W->rows, c.W->cols);
  Eigen::Map<Mat> gU(grad.data() + c.U->offset, c.U->rows, c.U->cols);
  Eigen::Map<Vec> gb(grad.data() + c.b->offset, c.b->rows);

  Mat da(3 * d, g.cols());
  da.topRows(d) = g.array() * (k.ht - k.h).array() * k.z.array() * (1.0 - k.z.array());
  da.bottomRows(d) = g.array() * k.z.array() * (1.0 - k.ht.array().square());
  const Mat rh = k.r.cwiseProduct(k.h);
  const Mat drh = U.bottomRows(d).transpose() * da.bottomRows(d);
  da.middleRows(d, d) = drh.array() * k.h.array() * k.r.array() * (1.0 - k.r.array());

  gW.noalias() += da * k.x.transpose();
  gb += da.rowwise().sum();
  gU.topRows(2 * d).noalias() += da.topRows(2 * d) * k.h.transpose();
  gU.bottomRows(d).noalias() += da.bottomRows(d) * rh.transpose();

  dx.noalias() = W.transpose() * da;
  dh = (1.0 - k.z.array()) * g.array() + k.r.array() * drh.array();
  dh.noalias() += U.topRows(2 * d).transpose() * da.topRows(2 * d);
}

struct MlpCache {
  Mat in, a1, a2;
};

Mat mlp(const Params& p, const std::string& prefix, const Mat& in, MlpCache* cache) {
  const auto& W1 = p.block(prefix + ".W1");
  const auto& b1 = p.block(prefix + ".b1");
  const auto& W2 = p.block(prefix + ".W2");
  const auto& b2 = p.block(prefix + ".b2");
  const auto& W3 = p.block(prefix + ".W3");
  const auto& b3 = p.block(prefix + ".b3");
  Mat a1 = p.mat(W1) * in;
  a1.colwise() += p.mat(b1).col(0);
  Mat a2 = p.mat(W2) * a1.cwiseMax(0.0);
  a2.colwise() += p.mat(b2).col(0);
  Mat out = p.mat(W3) * a2.cwiseMax(0.0);
  out.colwise() += p.mat(b3).col(0);
  if (cache) {
    cache->in = in;
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
  }
  return out;
}

Mat mlp_backward(const Params& p, const std::string& prefix, const MlpCache& k, const Mat& g,
                 std::vector<double>& grad) {
  auto gmat = [&](const Block& b) { return Eigen::Map<Mat>(grad.data() + b.offset, b.rows, b.cols); };
  const auto& W1 = p.block(prefix + ".W1");
  const auto& W2 = p.block(prefix + ".W2");
  const auto& W3 = p.block(prefix + ".W3");
  const Mat y1 = k.a1.cwiseMax(0.0);
  const Mat y2 = k.a2.cwiseMax(0.0);
  gmat(W3).noalias() += g * y2.transpose();
  gmat(p.block(prefix + ".b3")) += g.rowwise().sum();
  const Mat d2 = (p.mat(W3).transpose() * g).array() * (k.a2.array() > 0.0).cast<double>();
  gmat(W2).noalias() += d2 * y1.transpose();
  gmat(p.block(prefix + ".b2")) += d2.rowwise().sum();
  const Mat d1 = (p.mat(W2).transpose() * d2).array() * (k.a1.array() > 0.0).cast<double>();
  gmat(W1).noalias() += d1 * k.in.transpose();
  gmat(p.block(prefix + ".b1")) += d1.rowwise().sum();
  return p.mat(W1).transpose() * d1;
}

/// Dense view of a sample with encoded features. Flows advance one hop at a
/// time in lockstep, links one queue at a time.
struct Graph {
  SampleIndex index;
  Mat x_f, x_q, x_l;  // d x count
  std::vector<double> buffer;  // per queue
  std::vector<std::vector<double>> tx;  // per flow per hop, seconds
  std::vector<std::vector<int>> hop_flows;   // flows with a k-th hop
  std::vector<std::vector<int>> slot_links;  // links with a k-th queue

  Graph(const Model& model, const NetworkSample& sample) : index(sample) {
    const int d = model.hyper.d;
    x_l = Mat::Zero(d, index.num_links());
    x_q = Mat::Zero(d, index.num_queues());
    x_f = Mat::Zero(d, index.num_flows());
    auto put = [](Mat& m, int col, const auto& a) {
      for (std::size_t i = 0; i < a.size(); ++i) m(static_cast<int>(i), col) = a[i];
    };
    for (int l = 0; l < index.num_links(); ++l) {
      put(x_l, l, model.scaler.link(index.link(l), index.port(l).policy));
      const auto n = index.link_queues(l).size();
      if (slot_links.size() < n) slot_links.resize(n);
      for (std::size_t k = 0; k < n; ++k) slot_links[k].push_back(l);
    }
    for (int q = 0; q < index.num_queues(); ++q) {
      put(x_q, q, model.scaler.queue(index.queue_spec(q), index.queue_class(q)));
      buffer.push_back(index.queue_spec(q).buffer_size);
    }
    for (int f = 0; f < index.num_flows(); ++f) {
      put(x_f, f, model.scaler.flow(sample.flows[f].descriptor));
      std::vector<double> t;
      for (const auto& hop : index.flow_path(f)) t.push_back(sample.flows[f].mean_pkt_bits / index.link(hop.link).capacity());
      tx.push_back(std::move(t));
      const auto n = index.flow_path(f).size();
      if (hop_flows.size() < n) hop_flows.resize(n);
      for (std::size_t k = 0; k < n; ++k) hop_flows[k].push_back(f);
    }
  }
};

struct Tape {
  std::vector<std::vector<GruCache>> flow;  // [t][hop]
  std::vector<GruCache> queue;              // [t]
  std::vector<std::vector<GruCache>> link;  // [t][slot]
  MlpCache rq, rf;
};

struct Raw {
  Mat h_f, h_q, h_l;
  Mat rq;  // 2 x queues, pre-activation
  Mat rf;  // 1 x flows, empty unless requested
};

Raw run_forward(const Model& model, const Graph& g, Tape* tape, bool need_rf) {
  const Params& p = model.params;
  const int d = p.d();
  const int T = model.hyper.T;
  if (model.hyper.l_max < 1) throw Error("forward: l_max must be >= 1");
  const Cell frnn = cell_blocks(p, "frnn");
  const Cell uq = cell_blocks(p, "uq");
  const Cell lrnn = cell_blocks(p, "lrnn");
  const auto& ix = g.index;

  Raw out{g.x_f, g.x_q, g.x_l, {}, {}};
  if (tape) {
    tape->flow.assign(T, std::vector<GruCache>(g.hop_flows.size()));
    tape->queue.assign(T, {});
    tape->link.assign(T, std::vector<GruCache>(g.slot_links.size()));
  }
  for (int t = 0; t < T; ++t) {
    // Segments of l_max hops start from the previous segment's output, so
    // the forward pass is one continuous fold.
    Mat msg = Mat::Zero(d, ix.num_queues());
    Mat h_f = out.h_f;
    for (std::size_t k = 0; k < g.hop_flows.size(); ++k) {
      const auto& flows = g.hop_flows[k];
      const auto n = static_cast<int>(flows.size());
      Mat x(2 * d, n), h(d, n);
      for (int i = 0; i < n; ++i) {
        const auto& hop = ix.flow_path(flows[i])[k];
        x.col(i).head(d) = out.h_q.col(hop.queue);
        x.col(i).tail(d) = out.h_l.col(hop.link);
        h.col(i) = h_f.col(flows[i]);
      }
      const Mat next = gru_step(p, frnn, x, h, tape ? &tape->flow[t][k] : nullptr);
      for (int i = 0; i < n; ++i) {
        h_f.col(flows[i]) = next.col(i);
        msg.col(ix.flow_path(flows[i])[k].queue) += next.col(i);
      }
    }
    Mat h_q = gru_step(p, uq, msg, out.h_q, tape ? &tape->queue[t] : nullptr);
    Mat h_l = out.h_l;
    for (std::size_t k = 0; k < g.slot_links.size(); ++k) {
      const auto& links = g.slot_links[k];
      const auto n = static_cast<int>(links.size());
      Mat x(d, n), h(d, n);
      for (int i = 0; i < n; ++i) {
        x.col(i) = h_q.col(ix.link_queues(links[i])[k]);
        h.col(i) = h_l.col(links[i]);
      }
      const Mat next = gru_step(p, lrnn, x, h, tape ? &tape->link[t][k] : nullptr);
      for (int i = 0; i < n; ++i) h_l.col(links[i]) = next.col(i);
    }
    out.h_f = std::move(h_f);
    out.h_q = std::move(h_q);
    out.h_l = std::move(h_l);
  }
  out.rq = mlp(p, "rq", out.h_q, tape ? &tape->rq : nullptr);
  if (need_rf) out.rf = mlp(p, "rf", out.h_f, tape ? &tape->rf : nullptr);
  return out;
}

/// Per-flow scaled errors and their gradients w.r.t. the raw readout outputs.
struct FlowTerms {
  double sum_sq = 0.0;
  int flows = 0;
  std::vector<Vec> d_rq;       // per queue, 2
  std::vector<double> d_rf;    // per flow
};

FlowTerms flow_terms(const Model& model, const Graph& g, const NetworkSample& sample, const Raw& raw, double weight) {
  if (!sample.labels) throw Error("objective: sample has no labels");
  const auto& truth = sample.labels->flows;
  const auto& ix = g.index;
  if (static_cast<int>(truth.size()) != ix.num_flows()) throw Error("objective: label count does not match flows");
  FlowTerms out;
  out.d_rq.assign(ix.num_queues(), Vec::Zero(2));
  out.d_rf.assign(ix.num_flows(), 0.0);
  for (int f = 0; f < ix.num_flows(); ++f) {
    const auto& path = ix.flow_path(f);
    const auto& tx = g.tx[f];
    if (model.target == Target::kLoss) {
      const double y = sigmoid(raw.rf(0, f));
      const double e = y - truth[f].loss_ratio;
      out.sum_sq += e * e;
      ++out.flows;
      out.d_rf[f] = weight * 2.0 * e * y * (1.0 - y);
      continue;
    }
    if (!truth[f].reliable || path.empty()) continue;
    double pred = 0.0;
    double norm = 0.0;
    const bool delay = model.target == Target::kDelay;
    for (std::size_t h = 0; h < path.size(); ++h) {
      const auto a = raw.rq.col(path[h].queue);
      if (delay) {
        pred += (sigmoid(a[0]) * g.buffer[path[h].queue] + 1.0) * tx[h];
        norm += tx[h];
      } else {
        pred += softplus(a[1]) * tx[h] * tx[h];
        norm += tx[h] * tx[h];
      }
    }
    const double target = delay ? truth[f].mean_delay : truth[f].jitter;
    norm = target > 0.0 ? target : norm;
    const double e = (pred - target) / norm;
    out.sum_sq += e * e;
    ++out.flows;
    const double de = weight * 2.0 * e / norm;
    for (std::size_t h = 0; h < path.size(); ++h) {
      const int q = path[h].queue;
      const auto a = raw.rq.col(q);
      if (delay) {
        const double o = sigmoid(a[0]);
        out.d_rq[q][0] += de * g.buffer[q] * tx[h] * o * (1.0 - o);
      } else {
        out.d_rq[q][1] += de * tx[h] * tx[h] * sigmoid(a[1]);
      }
    }
  }
  return out;
}

void backward(const Model& model, const Graph& g, const Tape& tape, const Raw& raw, const FlowTerms& terms,
              std::vector<double>& grad) {
  const Params& p = model.params;
  const int d = p.d();
  const int T = model.hyper.T;
  const auto l_max = static_cast<std::size_t>(model.hyper.l_max);
  const Cell frnn = cell_blocks(p, "frnn");
  const Cell uq = cell_blocks(p, "uq");
  const Cell lrnn = cell_blocks(p, "lrnn");
  const auto& ix = g.index;

  Mat d_rq(2, ix.num_queues());
  for (int q = 0; q < ix.num_queues(); ++q) d_rq.col(q) = terms.d_rq[q];
  Mat dHq = mlp_backward(p, "rq", tape.rq, d_rq, grad);
  Mat dHf = Mat::Zero(d, ix.num_flows());
  if (raw.rf.size() > 0) {
    const Mat d_rf = Eigen::Map<const Mat>(terms.d_rf.data(), 1, ix.num_flows());
    dHf = mlp_backward(p, "rf", tape.rf, d_rf, grad);
  }
  Mat dHl = Mat::Zero(d, ix.num_links());
  Mat dx, dh;
  for (int t = T - 1; t >= 0; --t) {
    for (std::size_t k = g.slot_links.size(); k-- > 0;) {
      const auto& links = g.slot_links[k];
      const auto n = static_cast<int>(links.size());
      Mat gl(d, n);
      for (int i = 0; i < n; ++i) gl.col(i) = dHl.col(links[i]);
      gru_backward(p, lrnn, tape.link[t][k], gl, grad, dx, dh);
      for (int i = 0; i < n; ++i) {
        dHq.col(ix.link_queues(links[i])[k]) += dx.col(i);
        dHl.col(links[i]) = dh.col(i);
      }
    }
    Mat dM;
    gru_backward(p, uq, tape.queue[t], dHq, grad, dM, dh);
    dHq = dh;
    for (std::size_t k = g.hop_flows.size(); k-- > 0;) {
      const auto& flows = g.hop_flows[k];
      const auto n = static_cast<int>(flows.size());
      Mat gf(d, n);
      for (int i = 0; i < n; ++i) gf.col(i) = dHf.col(flows[i]) + dM.col(ix.flow_path(flows[i])[k].queue);
      gru_backward(p, frnn, tape.flow[t][k], gf, grad, dx, dh);
      const bool cut = k > 0 && k % l_max == 0;
      for (int i = 0; i < n; ++i) {
        const auto& hop = ix.flow_path(flows[i])[k];
        dHq.col(hop.queue) += dx.col(i).head(d);
        dHl.col(hop.link) += dx.col(i).tail(d);
        if (cut) {
          dHf.col(flows[i]).setZero();
        } else {
          dHf.col(flows[i]) = dh.col(i);
        }
      }
    }
  }
}

int usable_flows(const Model& model, const NetworkSample& sample) {
  if (!sample.labels) throw Error("objective: sample has no labels");
  int n = 0;
  for (std::size_t f = 0; f < sample.flows.size(); ++f) {
    const auto& label = sample.labels->flows.at(f);
    if (model.target == Target::kLoss || (label.reliable && !sample.flows[f].path.empty())) ++n;
  }
  return n;
}

}  // namespace

std::string to_string(Target target) {
  switch (target) {
    case Target::kDelay:
      return "delay";
    case Target::kJitter:
      return "jitter";
    case Target::kLoss:
      return "loss";
  }
  return "delay";
}

Target target_from_string(const std::string& name) {
  if (name == "delay") return Target::kDelay;
  if (name == "jitter") return Target::kJitter;
  if (name == "loss") return Target::kLoss;
  throw Error("unknown target '" + name + "'");
}

Params::Params(int d) : d_(d) {
  if (d < kFlowFeatures) throw Error("hidden size must be at least " + std::to_string(kFlowFeatures));
  std::size_t offset = 0;
  auto add = [&](const std::string& name, int rows, int cols) {
    blocks_.push_back({name, offset, rows, cols});
    offset += blocks_.back().size();
  };
  const std::pair<const char*, int> cells[] = {{"frnn", 2 * d}, {"uq", d}, {"lrnn", d}};
  for (const auto& [name, in] : cells) {
    add(std::string(name) + ".W", 3 * d, in);
    add(std::string(name) + ".U", 3 * d, d);
    add(std::string(name) + ".b", 3 * d, 1);
  }
  const std::pair<const char*, int> heads[] = {{"rf", 1}, {"rq", 2}};
  for (const auto& [name, outs] : heads) {
    add(std::string(name) + ".W1", d, d);
    add(std::string(name) + ".b1", d, 1);
    add(std::string(name) + ".W2", d, d);
    add(std::string(name) + ".b2", d, 1);
    add(std::string(name) + ".W3", outs, d);
    add(std::string(name) + ".b3", outs, 1);
  }
  values_.assign(offset, 0.0);
}

std::size_t Params::count(int d) { return Params(d).values().size(); }

const Block& Params::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error("no parameter block '" + name + "'");
}

void Params::init(std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& b : blocks_) {
    const double bound = std::sqrt(3.0 / static_cast<double>(b.cols));
    for (std::size_t i = 0; i < b.size(); ++i) {
      values_[b.offset + i] = is_bias(b.name) ? 0.0 : rng.uniform(-bound, bound);
    }
  }
}

FeatureScaler FeatureScaler::fit(const std::vector<NetworkSample>& samples) {
  FeatureScaler s;
  constexpr double inf = std::numeric_limits<double>::infinity();
  s.link_lo.fill(inf);
  s.link_hi.fill(-inf);
  s.queue_lo.fill(inf);
  s.queue_hi.fill(-inf);
  s.flow_lo.fill(inf);
  s.flow_hi.fill(-inf);
  auto widen = [](auto& lo, auto& hi, int i, double v) {
    lo[i] = std::min(lo[i], v);
    hi[i] = std::max(hi[i], v);
  };
  for (const auto& sample : samples) {
    for (const auto& link : sample.topology.links) {
      widen(s.link_lo, s.link_hi, 0, std::log(link.c_ref));
      widen(s.link_lo, s.link_hi, 1, std::log(link.s_f));
    }
    for (const auto& port : sample.ports) {
      s.policies[static_cast<int>(port.policy)] = true;
      s.max_classes = std::max(s.max_classes, static_cast<int>(port.queues.size()));
      for (const auto& q : port.queues) {
        widen(s.queue_lo, s.queue_hi, 0, q.buffer_size);
        widen(s.queue_lo, s.queue_hi, 1, q.weight);
      }
    }
    for (const auto& flow : sample.flows) {
      const auto v = raw_flow(flow.descriptor);
      for (int i = kFirstNumericFlow; i < kFlowFeatures; ++i) widen(s.flow_lo, s.flow_hi, i, v[i]);
    }
  }
  auto settle = [](auto& lo, auto& hi) {
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!std::isfinite(lo[i])) lo[i] = hi[i] = 0.0;
    }
  };
  settle(s.link_lo, s.link_hi);
  settle(s.queue_lo, s.queue_hi);
  settle(s.flow_lo, s.flow_hi);
  if (s.max_classes > kMaxClasses) throw Error("ports with more than 3 queues are not supported");
  return s;
}

std::array<double, kLinkFeatures> FeatureScaler::link(const Link& l, Policy policy) const {
  if (!policies[static_cast<int>(policy)]) {
    throw Error("policy " + std::string(to_string(policy)) + " was not seen in training");
  }
  std::array<double, kLinkFeatures> x{};
  x[0] = scale(std::log(l.c_ref), link_lo[0], link_hi[0]);
  x[1] = scale(std::log(l.s_f), link_lo[1], link_hi[1]);
  x[2 + static_cast<int>(policy)] = 1.0;
  return x;
}

std::array<double, kQueueFeatures> FeatureScaler::queue(const QueueSpec& spec, int cls) const {
  if (cls >= max_classes) throw Error("priority level " + std::to_string(cls) + " was not seen in training");
  std::array<double, kQueueFeatures> x{};
  x[0] = scale(spec.buffer_size, queue_lo[0], queue_hi[0]);
  x[1 + cls] = 1.0;
  x[1 + kMaxClasses] = scale(spec.weight, queue_lo[1], queue_hi[1]);
  return x;
}

std::array<double, kFlowFeatures> FeatureScaler::flow(const TrafficDescriptor& desc) const {
  auto v = raw_flow(desc);
  for (int i = kFirstNumericFlow; i < kFlowFeatures; ++i) v[i] = scale(v[i], flow_lo[i], flow_hi[i]);
  return v;
}

Model Model::create(const std::vector<NetworkSample>& samples, const Hyper& hyper, Target target, std::uint64_t seed) {
  if (hyper.T < 1 || hyper.l_max < 1) throw Error("T and l_max must be >= 1");
  Model m;
  m.hyper = hyper;
  m.target = target;
  m.scaler = FeatureScaler::fit(samples);
  m.params = Params(hyper.d);
  m.params.init(seed);
  return m;
}

Vec gru_cell(const Params& params, const std::string& prefix, const Vec& x, const Vec& h) {
  return gru_step(params, cell_blocks(params, prefix), x, h, nullptr).col(0);
}

ForwardOutput forward(const Model& model, const NetworkSample& sample) {
  require_valid(sample);
  const Graph g(model, sample);
  const Raw raw = run_forward(model, g, nullptr, true);
  ForwardOutput out;
  for (Eigen::Index q = 0; q < raw.rq.cols(); ++q) {
    out.occupancy.push_back(sigmoid(raw.rq(0, q)));
    out.jitter.push_back(softplus(raw.rq(1, q)));
  }
  for (Eigen::Index f = 0; f < raw.rf.cols(); ++f) out.loss.push_back(sigmoid(raw.rf(0, f)));
  for (Eigen::Index i = 0; i < raw.h_f.cols(); ++i) out.h_f.push_back(raw.h_f.col(i));
  for (Eigen::Index i = 0; i < raw.h_q.cols(); ++i) out.h_q.push_back(raw.h_q.col(i));
  for (Eigen::Index i = 0; i < raw.h_l.cols(); ++i) out.h_l.push_back(raw.h_l.col(i));
  return out;
}

std::vector<FlowEstimate> assemble_flow_delay_jitter(const NetworkSample& sample, const std::vector<double>& occupancy,
                                                     const std::vector<double>& jitter) {
  const SampleIndex ix(sample);
  if (static_cast<int>(occupancy.size()) != ix.num_queues() || static_cast<int>(jitter.size()) != ix.num_queues()) {
    throw Error("assemble: one occupancy and jitter value per queue expected");
  }
  std::vector<FlowEstimate> out;
  for (int f = 0; f < ix.num_flows(); ++f) {
    FlowEstimate e;
    for (const auto& hop : ix.flow_path(f)) {
      const double tx = sample.flows[f].mean_pkt_bits / ix.link(hop.link).capacity();
      e.delay += (occupancy[hop.queue] * ix.queue_spec(hop.queue).buffer_size + 1.0) * tx;
      e.jitter += jitter[hop.queue] * tx * tx;
    }
    out.push_back(e);
  }
  return out;
}

double loss_mse(const PerfLabels& pred, const PerfLabels& truth, Target target) {
  if (pred.flows.size() != truth.flows.size()) throw Error("loss_mse: flow sets differ");
  double sum = 0.0;
  int n = 0;
  for (std::size_t f = 0; f < pred.flows.size(); ++f) {
    const auto& p = pred.flows[f];
    const auto& t = truth.flows[f];
    if (p.flow_id != t.flow_id) throw Error("loss_mse: flow sets differ");
    double e = 0.0;
    if (target == Target::kLoss) {
      e = p.loss_ratio - t.loss_ratio;
    } else {
      if (!t.reliable) continue;
      e = target == Target::kDelay ? p.mean_delay - t.mean_delay : p.jitter - t.jitter;
    }
    sum += e * e;
    ++n;
  }
  if (n == 0) throw Error("loss_mse: empty flow set");
  return sum / n;
}

double objective(const Model& model, const std::vector<const NetworkSample*>& batch) {
  double sum = 0.0;
  int n = 0;
  for (const auto* s : batch) {
    require_valid(*s);
    const Graph g(model, *s);
    const Raw raw = run_forward(model, g, nullptr, model.target == Target::kLoss);
    const FlowTerms terms = flow_terms(model, g, *s, raw, 0.0);
    sum += terms.sum_sq;
    n += terms.flows;
  }
  if (n == 0) throw Error("objective: no usable flows");
  return sum / n;
}

Gradient grad(const Model& model, const std::vector<const NetworkSample*>& batch) {
  if (batch.empty()) throw Error("grad: empty batch");
  Gradient out;
  out.values.assign(model.params.values().size(), 0.0);
  int total = 0;
  for (const auto* s : batch) total += usable_flows(model, *s);
  if (total == 0) throw Error("grad: no usable flows");
  const double weight = 1.0 / total;
  double sum = 0.0;
  for (const auto* s : batch) {
    require_valid(*s);
    const Graph g(model, *s);
    Tape tape;
    const Raw raw = run_forward(model, g, &tape, model.target == Target::kLoss);
    const FlowTerms terms = flow_terms(model, g, *s, raw, weight);
    sum += terms.sum_sq;
    backward(model, g, tape, raw, terms, out.values);
  }
  out.loss = sum / total;
  out.flows = total;
  for (const auto& b : model.params.blocks()) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (!std::isfinite(out.values[b.offset + i])) throw Error("non-finite gradient in block " + b.name);
    }
  }
  return out;
}

double evaluate(const Model& model, const std::vector<NetworkSample>& samples) {
  std::vector<const NetworkSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return objective(model, ptrs);
}

TrainResult train(Model model, const std::vector<NetworkSample>& train_set, const std::vector<NetworkSample>& validation,
                  const TrainOptions& opt) {
  if (train_set.empty()) throw Error("train: empty training set");
  if (opt.batch_size < 1 || opt.epochs < 0) throw Error("train: bad batch size or epoch count");
  auto& theta = model.params.values();
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(opt.seed);
  TrainResult result{model, {}, 0};
  double best = std::numeric_limits<double>::infinity();
  long step = 0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    const double lr = opt.lr * std::pow(opt.lr_decay, epoch - 1);
    double loss_sum = 0.0;
    int flows = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      std::vector<const NetworkSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + opt.batch_size); ++i) {
        batch.push_back(&train_set[order[i]]);
      }
      int usable = 0;
      for (const auto* s : batch) usable += usable_flows(model, *s);
      if (usable == 0) continue;
      Gradient gr;
      try {
        gr = grad(model, batch);
      } catch (const Error& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(gr.loss)) throw Error("training diverged at epoch " + std::to_string(epoch));
      loss_sum += gr.loss * gr.flows;
      flows += gr.flows;
      ++step;
      const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = gr.values[i];
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
        theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
      }
    }
    EpochLog log{epoch, flows > 0 ? loss_sum / flows : 0.0, 0.0};
    log.validation = validation.empty() ? log.train : evaluate(model, validation);
    if (!std::isfinite(log.validation)) throw Error("training diverged at epoch " + std::to_string(epoch));
    result.curve.push_back(log);
    if (opt.on_epoch) opt.on_epoch(epoch, log.train, log.validation);
    if (log.validation < best) {
      best = log.validation;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  if (opt.epochs == 0) result.model = model;
  return result;
}

Inference infer(const Model& model, const NetworkSample& sample) {
  require_valid(sample);
  const auto t0 = std::chrono::steady_clock::now();
  const Graph g(model, sample);
  const Raw raw = run_forward(model, g, nullptr, true);
  std::vector<double> occ, jit;
  for (Eigen::Index q = 0; q < raw.rq.cols(); ++q) {
    occ.push_back(sigmoid(raw.rq(0, q)));
    jit.push_back(softplus(raw.rq(1, q)));
  }
  const auto est = assemble_flow_delay_jitter(sample, occ, jit);
  const auto t1 = std::chrono::steady_clock::now();
  Inference out;
  out.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  for (int f = 0; f < g.index.num_flows(); ++f) {
    FlowLabel label;
    label.flow_id = sample.flows[f].id;
    label.mean_delay = est[f].delay;
    label.jitter = est[f].jitter;
    label.loss_ratio = sigmoid(raw.rf(0, f));
    out.labels.flows.push_back(label);
  }
  for (int q = 0; q < g.index.num_queues(); ++q) {
    QueueLabel label;
    label.queue = g.index.queue_ref(q);
    label.mean_occupancy = occ[q];
    out.labels.queues.push_back(label);
  }
  return out;
}

namespace {

template <std::size_t N>
Json arr(const std::array<double, N>& a) {
  return Json(std::vector<double>(a.begin(), a.end()));
}

template <std::size_t N>
void read_arr(const Json& j, std::array<double, N>& a) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != N) throw Error("model: bad normalizer length");
  std::copy(v.begin(), v.end(), a.begin());
}

}  // namespace

Json to_json(const Model& model) {
  Json j;
  j["format"] = "netperf-gnn";
  j["version"] = 1;
  j["hyper"] = {{"d", model.hyper.d}, {"T", model.hyper.T}, {"l_max", model.hyper.l_max}};
  j["target"] = to_string(model.target);
  const auto& s = model.scaler;
  std::vector<std::string> policies;
  for (int p = 0; p < kNumPolicies; ++p) {
    if (s.policies[p]) policies.emplace_back(to_string(static_cast<Policy>(p)));
  }
  j["scaler"] = {{"link_lo", arr(s.link_lo)},   {"link_hi", arr(s.link_hi)},   {"queue_lo", arr(s.queue_lo)},
                 {"queue_hi", arr(s.queue_hi)}, {"flow_lo", arr(s.flow_lo)},   {"flow_hi", arr(s.flow_hi)},
                 {"policies", policies},        {"max_classes", s.max_classes}};
  Json blocks = Json::array();
  for (const auto& b : model.params.blocks()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  j["blocks"] = std::move(blocks);
  j["weights"] = model.params.values();
  return j;
}

Model model_from_json(const Json& j) {
  if (j.value("format", "") != "netperf-gnn") throw Error("not a netperf-gnn model");
  if (j.value("version", 0) != 1) throw Error("unsupported model version");
  Model m;
  const auto& h = j.at("hyper");
  m.hyper = {h.at("d").get<int>(), h.at("T").get<int>(), h.at("l_max").get<int>()};
  m.target = target_from_string(j.at("target").get<std::string>());
  const auto& s = j.at("scaler");
  read_arr(s.at("link_lo"), m.scaler.link_lo);
  read_arr(s.at("link_hi"), m.scaler.link_hi);
  read_arr(s.at("queue_lo"), m.scaler.queue_lo);
  read_arr(s.at("queue_hi"), m.scaler.queue_hi);
  read_arr(s.at("flow_lo"), m.scaler.flow_lo);
  read_arr(s.at("flow_hi"), m.scaler.flow_hi);
  for (const auto& p : s.at("policies")) m.scaler.policies[static_cast<int>(policy_from_string(p.get<std::string>()))] = true;
  m.scaler.max_classes = s.at("max_classes").get<int>();
  m.params = Params(m.hyper.d);
  const auto& blocks = j.at("blocks");
  if (blocks.size() != m.params.blocks().size()) throw Error("model: block layout mismatch");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = m.params.blocks()[i];
    if (blocks[i].at("name") != b.name || blocks[i].at("rows") != b.rows || blocks[i].at("cols") != b.cols) {
      throw Error("model: block layout mismatch at " + b.name);
    }
  }
  auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != m.params.values().size()) throw Error("model: weight count mismatch");
  for (const double x : w) {
    if (!std::isfinite(x)) throw Error("model: non-finite weight");
  }
  m.params.values() = std::move(w);
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) { write_json_file(path, to_json(model)); }

Model load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

}  // namespace netperf::gnn
