#include "midgn/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "midgn/error.hpp"
#include "midgn/parallel.hpp"

namespace midgn {

namespace {

std::size_t chunk_width_of(const Matrix& item_emb) { return item_emb.cols(); }

void check_shapes(const BipartiteGraph& graph, const Matrix& item_emb) {
  if (item_emb.rows() != graph.right_count()) {
    throw StructuralError("item table has " + std::to_string(item_emb.rows()) + " rows, graph has " +
                          std::to_string(graph.right_count()) + " right nodes");
  }
}

struct Aggregation {
  ChunkedNodeState nodes;
  Matrix node_degree;
  Matrix item_degree;
};

Aggregation aggregate_with_degrees(const BipartiteGraph& graph, const IntentConfidence& p, const Matrix& item_emb) {
  const std::size_t K = p.intents();
  const std::size_t w = chunk_width_of(item_emb);
  Aggregation out{Matrix(graph.left_count(), K * w), Matrix(graph.left_count(), K), Matrix(graph.right_count(), K)};

  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      auto deg = out.node_degree.row(c);
      for (std::size_t e : nb.edges)
        for (std::size_t k = 0; k < K; ++k) deg[k] += p.at(e, k);
    }
  });
  parallel_for(graph.right_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nb = graph.neighbors(Side::right, i);
      auto deg = out.item_degree.row(i);
      for (std::size_t e : nb.edges)
        for (std::size_t k = 0; k < K; ++k) deg[k] += p.at(e, k);
    }
  });
  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const std::size_t e = nb.edges[j];
        const Id i = nb.ids[j];
        const auto z = item_emb.row(i);
        for (std::size_t k = 0; k < K; ++k) {
          const double weight = p.at(e, k) / std::sqrt(out.node_degree(c, k) * out.item_degree(i, k));
          axpy(weight, z, out.nodes.chunk(c, k, w));
        }
      }
    }
  });
  return out;
}

// Gradient of the aggregation w.r.t. the normalized confidences; also adds
// the item-table gradient of the aggregation itself.
std::vector<double> aggregate_backward(const BipartiteGraph& graph, const IntentConfidence& p,
                                       const Matrix& node_degree, const Matrix& item_degree,
                                       const Matrix& item_emb, const Matrix& grad_nodes, Matrix& grad_item) {
  const std::size_t K = p.intents();
  const std::size_t w = chunk_width_of(item_emb);
  const std::size_t E = graph.edge_count();
  std::vector<double> g_weight(E * K, 0.0);  // d/dW_e,k
  std::vector<double> scale(E * K, 0.0);     // r_e,k = (Dc * Di)^-1/2

  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const std::size_t e = nb.edges[j];
        const auto z = item_emb.row(nb.ids[j]);
        for (std::size_t k = 0; k < K; ++k) {
          g_weight[e * K + k] = dot(grad_nodes.chunk(c, k, w), z);
          scale[e * K + k] = 1.0 / std::sqrt(node_degree(c, k) * item_degree(nb.ids[j], k));
        }
      }
    }
  });

  // item gradient from the aggregation: sum over incident edges of W * g_node
  parallel_for(graph.right_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nb = graph.neighbors(Side::right, i);
      auto gz = grad_item.row(i);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const std::size_t e = nb.edges[j];
        const Id c = nb.ids[j];
        for (std::size_t k = 0; k < K; ++k) axpy(p.at(e, k) * scale[e * K + k], grad_nodes.chunk(c, k, w), gz);
      }
    }
  });

  Matrix g_node_deg(graph.left_count(), K);
  Matrix g_item_deg(graph.right_count(), K);
  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      for (std::size_t e : nb.edges)
        for (std::size_t k = 0; k < K; ++k)
          g_node_deg(c, k) += -0.5 * g_weight[e * K + k] * p.at(e, k) * scale[e * K + k] / node_degree(c, k);
    }
  });
  parallel_for(graph.right_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nb = graph.neighbors(Side::right, i);
      for (std::size_t e : nb.edges)
        for (std::size_t k = 0; k < K; ++k)
          g_item_deg(i, k) += -0.5 * g_weight[e * K + k] * p.at(e, k) * scale[e * K + k] / item_degree(i, k);
    }
  });

  std::vector<double> g_p(E * K, 0.0);
  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const std::size_t e = nb.edges[j];
        for (std::size_t k = 0; k < K; ++k) {
          g_p[e * K + k] = g_weight[e * K + k] * scale[e * K + k] + g_node_deg(c, k) + g_item_deg(nb.ids[j], k);
        }
      }
    }
  });
  return g_p;
}

// Backward of A += <chunk_k(c), i>: adds into the node-state gradient and
// the item gradient given dL/dA.
void update_backward(const BipartiteGraph& graph, const std::vector<double>& g_raw, const ChunkedNodeState& nodes,
                     const Matrix& item_emb, std::size_t K, Matrix& grad_nodes, Matrix& grad_item) {
  const std::size_t w = chunk_width_of(item_emb);
  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const std::size_t e = nb.edges[j];
        const auto z = item_emb.row(nb.ids[j]);
        for (std::size_t k = 0; k < K; ++k) axpy(g_raw[e * K + k], z, grad_nodes.chunk(c, k, w));
      }
    }
  });
  parallel_for(graph.right_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nb = graph.neighbors(Side::right, i);
      auto gz = grad_item.row(i);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const std::size_t e = nb.edges[j];
        for (std::size_t k = 0; k < K; ++k) axpy(g_raw[e * K + k], nodes.chunk(nb.ids[j], k, w), gz);
      }
    }
  });
}

}  // namespace

IntentConfidence init_confidence(const BipartiteGraph& graph, std::size_t intents) {
  if (intents == 0) throw ConfigError("intent count must be >= 1");
  return IntentConfidence(graph.edge_count(), intents, 1.0);
}

IntentConfidence normalize_confidence(const IntentConfidence& conf) {
  IntentConfidence out(conf.edge_count(), conf.intents(), 0.0);
  const std::size_t K = conf.intents();
  parallel_for(conf.edge_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t e = lo; e < hi; ++e) {
      const auto raw = conf.edge(e);
      auto dst = out.edge(e);
      const double mx = *std::max_element(raw.begin(), raw.end());
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        dst[k] = std::exp(raw[k] - mx);
        total += dst[k];
      }
      for (std::size_t k = 0; k < K; ++k) dst[k] /= total;
    }
  });
  return out;
}

void confidence_update(const BipartiteGraph& graph, IntentConfidence& conf, const ChunkedNodeState& nodes,
                       const Matrix& item_emb) {
  check_shapes(graph, item_emb);
  const std::size_t K = conf.intents();
  const std::size_t w = chunk_width_of(item_emb);
  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const auto z = item_emb.row(nb.ids[j]);
        for (std::size_t k = 0; k < K; ++k) conf.at(nb.edges[j], k) += dot(nodes.chunk(c, k, w), z);
      }
    }
  });
}

ChunkedNodeState weighted_aggregate(const BipartiteGraph& graph, const IntentConfidence& normalized,
                                    const Matrix& item_emb) {
  check_shapes(graph, item_emb);
  return aggregate_with_degrees(graph, normalized, item_emb).nodes;
}

RouteResult route_iteration(const BipartiteGraph& graph, const IntentConfidence& conf, const ChunkedNodeState&,
                            const Matrix& item_emb) {
  check_shapes(graph, item_emb);
  RouteResult r;
  r.nodes = weighted_aggregate(graph, normalize_confidence(conf), item_emb);
  r.conf = conf;
  confidence_update(graph, r.conf, r.nodes, item_emb);
  return r;
}

LayerTrace disentangle_layer(const BipartiteGraph& graph, const ChunkedNodeState& input, const Matrix& item_emb,
                             const RoutingConfig& cfg) {
  check_shapes(graph, item_emb);
  if (cfg.iterations == 0) throw ConfigError("routing iterations must be >= 1");
  const std::size_t K = cfg.intents;
  if (input.rows() != graph.left_count() || input.cols() != K * item_emb.cols()) {
    throw StructuralError("node state shape does not match graph and intent layout");
  }
  LayerTrace trace;
  trace.input = input;
  IntentConfidence raw = init_confidence(graph, K);
  if (cfg.seed_from_input) confidence_update(graph, raw, input, item_emb);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    trace.weights.push_back(normalize_confidence(raw));
    auto agg = aggregate_with_degrees(graph, trace.weights.back(), item_emb);
    trace.states.push_back(std::move(agg.nodes));
    trace.node_degree.push_back(std::move(agg.node_degree));
    trace.item_degree.push_back(std::move(agg.item_degree));
    // the update after the last aggregation cannot affect the output
    if (t + 1 < cfg.iterations) confidence_update(graph, raw, trace.states.back(), item_emb);
  }
  return trace;
}

StackTrace disentangle_stack(const BipartiteGraph& graph, const ChunkedNodeState& init, const Matrix& item_emb,
                             std::size_t layers, const RoutingConfig& cfg) {
  if (layers == 0) throw ConfigError("layer count must be >= 1");
  StackTrace st;
  st.output = Matrix(init.rows(), init.cols());
  const ChunkedNodeState* current = &init;
  for (std::size_t l = 0; l < layers; ++l) {
    st.layers.push_back(disentangle_layer(graph, *current, item_emb, cfg));
    const auto& out = st.layers.back().output();
    axpy(1.0, out.flat(), st.output.flat());
    current = &st.layers.back().output();
  }
  return st;
}

void disentangle_stack_backward(const BipartiteGraph& graph, const StackTrace& trace, const Matrix& item_emb,
                                const RoutingConfig& cfg, const Matrix& grad_output, Matrix& grad_init,
                                Matrix& grad_item) {
  const std::size_t K = cfg.intents;
  const std::size_t E = graph.edge_count();
  // gradient flowing into the output of layer l from deeper layers
  Matrix carry(grad_output.rows(), grad_output.cols());
  for (std::size_t l = trace.layers.size(); l-- > 0;) {
    const LayerTrace& lt = trace.layers[l];
    Matrix g_state = grad_output;
    axpy(1.0, carry.flat(), g_state.flat());

    std::vector<double> g_raw(E * K, 0.0);
    Matrix g_input(lt.input.rows(), lt.input.cols());
    for (std::size_t t = lt.states.size(); t-- > 0;) {
      const IntentConfidence& p = lt.weights[t];
      auto g_p = aggregate_backward(graph, p, lt.node_degree[t], lt.item_degree[t], item_emb, g_state, grad_item);
      // softmax backward, accumulated into the running raw-confidence gradient
      parallel_for(E, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t e = lo; e < hi; ++e) {
          double inner = 0.0;
          for (std::size_t k = 0; k < K; ++k) inner += p.at(e, k) * g_p[e * K + k];
          for (std::size_t k = 0; k < K; ++k) g_raw[e * K + k] += p.at(e, k) * (g_p[e * K + k] - inner);
        }
      });
      if (t > 0) {
        Matrix g_prev(g_state.rows(), g_state.cols());
        update_backward(graph, g_raw, lt.states[t - 1], item_emb, K, g_prev, grad_item);
        g_state = std::move(g_prev);
      } else if (cfg.seed_from_input) {
        update_backward(graph, g_raw, lt.input, item_emb, K, g_input, grad_item);
      }
    }
    carry = std::move(g_input);
  }
  axpy(1.0, carry.flat(), grad_init.flat());
}

Matrix plain_aggregate(const BipartiteGraph& graph, const Matrix& item_emb) {
  check_shapes(graph, item_emb);
  Matrix out(graph.left_count(), item_emb.cols());
  parallel_for(graph.left_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const auto nb = graph.neighbors(Side::left, c);
      const double dc = static_cast<double>(nb.size());
      for (Id i : nb.ids) {
        const double di = static_cast<double>(graph.degree(Side::right, i));
        axpy(1.0 / std::sqrt(dc * di), item_emb.row(i), out.row(c));
      }
    }
  });
  return out;
}

void plain_aggregate_backward(const BipartiteGraph& graph, const Matrix& grad_output, Matrix& grad_item) {
  parallel_for(graph.right_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nb = graph.neighbors(Side::right, i);
      const double di = static_cast<double>(nb.size());
      for (Id c : nb.ids) {
        const double dc = static_cast<double>(graph.degree(Side::left, c));
        axpy(1.0 / std::sqrt(dc * di), grad_output.row(c), grad_item.row(i));
      }
    }
  });
}

void dump_confidences(const std::filesystem::path& path, const BipartiteGraph& graph,
                      const IntentConfidence& normalized) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "edge_id\tleft\tright\tk\tweight\n";
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    for (std::size_t k = 0; k < normalized.intents(); ++k) {
      out << e << '\t' << graph.edge_left(e) << '\t' << graph.edge_right(e) << '\t' << k << '\t'
          << normalized.at(e, k) << '\n';
    }
  }
}

}  // namespace midgn
