#include "dmloc/chain.hpp"

#include <algorithm>
#include <chrono>

#include "json.hpp"

namespace dmloc {

const char *to_string(Stage s) {
  switch (s) {
    case Stage::kAgentPredict:
      return "agent_predict";
    case Stage::kInterPanel:
      return "inter_panel";
    case Stage::kUpdate:
      return "update";
    case Stage::kForward:
      return "forward";
    case Stage::kAnchorPredict:
      return "anchor_predict";
  }
  return "unknown";
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

PanelNode::PanelNode(const Scenario &scn, const Panel &panel, const FilterConfig &cfg,
                     std::uint64_t seed, std::uint32_t run, int n_panels)
    : panel_(panel),
      n_panels_(n_panels),
      cfg_(cfg),
      model_(LikelihoodModel::from(scn)),
      seed_(seed),
      run_(run),
      geometry_(panel_anchors(scn, panel, cfg.spa.mode)) {
  for (std::size_t k = 0; k < geometry_.size(); ++k) {
    CounterRng rng(key(0, Purpose::kInitAnchor, static_cast<std::uint32_t>(k)));
    beliefs_.push_back(init_anchor(geometry_[k], cfg_.spa, rng));
  }
  prepare_next();
}

StreamKey PanelNode::key(int time, Purpose purpose, std::uint32_t slot) const {
  return {seed_, run_, static_cast<std::uint32_t>(time), static_cast<std::uint32_t>(panel_.id),
          purpose, slot};
}

bool PanelNode::is_duplicate(int incoming_time) const {
  const int produced = is_head() ? incoming_time + 1 : incoming_time;
  return produced < next_time_;
}

void PanelNode::record(Stage stage, int time_index, std::int64_t start_ns, std::int64_t end_ns) {
  trace_.push_back({panel_.id, time_index, stage, start_ns, end_ns});
}

std::vector<TraceEvent> PanelNode::take_trace() {
  std::vector<TraceEvent> out;
  out.swap(trace_);
  return out;
}

void PanelNode::prepare_next() {
  if (anchor_time_ >= next_time_) return;
  const int t = anchor_time_ + 1;
  const std::int64_t start = now_ns();
  for (std::size_t k = 0; k < beliefs_.size(); ++k) {
    CounterRng rng(key(t, Purpose::kPredictAnchor, static_cast<std::uint32_t>(k)));
    beliefs_[k] = predict_anchor(beliefs_[k], cfg_.spa, rng);
  }
  anchor_time_ = t;
  record(Stage::kAnchorPredict, t, start, now_ns());
}

ParticleCloud PanelNode::process(const ParticleCloud &incoming, const MeasurementSet &meas) {
  const int t = is_head() ? incoming.time_index + 1 : incoming.time_index;
  if (t < next_time_)
    throw ProtocolError("panel " + std::to_string(panel_.id) + ": duplicate message for time " +
                        std::to_string(t));
  if (t > next_time_)
    throw ProtocolError("panel " + std::to_string(panel_.id) + ": out-of-order message for time " +
                        std::to_string(t) + ", expected " + std::to_string(next_time_));

  std::int64_t start = now_ns();
  ParticleCloud alpha;
  if (is_head()) {
    CounterRng rng(key(t, Purpose::kPredictAgent));
    alpha = predict_agent(incoming, cfg_.motion, rng);
    record(Stage::kAgentPredict, t, start, now_ns());
  } else {
    CounterRng rng(key(t, Purpose::kInterPanel));
    alpha = inter_panel_predict(incoming, cfg_.motion, rng, t);
    record(Stage::kInterPanel, t, start, now_ns());
  }
  while (anchor_time_ < t) {
    // Lazy path when the driver skipped prepare_next().
    const int saved = next_time_;
    next_time_ = t;
    prepare_next();
    next_time_ = saved;
  }

  start = now_ns();
  for (std::size_t k = 0; k < geometry_.size(); ++k) {
    const auto slot = static_cast<std::uint32_t>(k);
    const AnchorBelief predicted = beliefs_[k];
    const UpdateResult upd = measurement_update(alpha, predicted, geometry_[k], meas, model_);
    beliefs_[k] = existence_update(predicted, upd);
    CounterRng anchor_rng(key(t, Purpose::kResampleAnchor, slot));
    beliefs_[k] = resample_anchor(beliefs_[k], anchor_rng);
    CounterRng agent_rng(key(t, Purpose::kResampleAgent, slot));
    alpha = progressive_update(alpha, upd, predicted, geometry_[k], meas, model_,
                               cfg_.spa.ess_floor, agent_rng);
  }
  record(Stage::kUpdate, t, start, now_ns());

  next_time_ = t + 1;
  alpha.time_index = t;
  alpha.origin_panel = panel_.id;
  alpha.role = is_tail() ? MessageRole::kBelief : MessageRole::kGamma;
  return alpha;
}

std::vector<int> PanelNode::detected_ids() const {
  std::vector<int> ids;
  for (const AnchorBelief &b : beliefs_)
    if (b.r_prob > cfg_.spa.p_de) ids.push_back(b.anchor_id);
  return ids;
}

std::vector<std::unique_ptr<PanelNode>> build_nodes(const Scenario &scn, const FilterConfig &cfg,
                                                    std::uint64_t seed, std::uint32_t run) {
  std::vector<std::unique_ptr<PanelNode>> nodes;
  const int j = static_cast<int>(scn.panels.size());
  for (const Panel &p : scn.panels)
    nodes.push_back(std::make_unique<PanelNode>(scn, p, cfg, seed, run, j));
  return nodes;
}

ParticleCloud initial_belief(const Scenario &scn, const FilterConfig &cfg, std::uint64_t seed,
                             std::uint32_t run) {
  CounterRng rng(StreamKey{seed, run, 0, 0, Purpose::kInitAgent, 0});
  ParticleCloud cloud = init_agent_cloud(scn.room, cfg.spa, rng);
  cloud.time_index = 0;
  return cloud;
}

InProcessChain::InProcessChain(std::vector<std::unique_ptr<PanelNode>> nodes)
    : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw std::invalid_argument("chain needs at least one panel");
}

TimestepResult InProcessChain::run_timestep(const ParticleCloud &prev_belief,
                                            const std::vector<MeasurementSet> &measurements) {
  if (measurements.size() != nodes_.size())
    throw std::invalid_argument("one measurement set per panel required");

  TimestepResult res;
  res.time_index = prev_belief.time_index + 1;
  ParticleCloud msg = quantize(prev_belief, 0);
  std::vector<AnchorBelief> all_anchors;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    PanelNode &node = *nodes_[i];
    ParticleCloud out = node.process(msg, measurements[i]);
    const std::int64_t start = now_ns();
    msg = quantize(out, static_cast<std::uint16_t>(node.panel_id()));
    node.record(Stage::kForward, res.time_index, start, now_ns());
    ++res.messages;

    res.anchors.push_back(node.anchors());
    all_anchors.insert(all_anchors.end(), node.anchors().begin(), node.anchors().end());
    const std::vector<int> ids = node.detected_ids();
    res.detected.insert(res.detected.end(), ids.begin(), ids.end());
    node.prepare_next();
  }
  res.belief = std::move(msg);
  res.belief.role = MessageRole::kBelief;
  res.estimate = mmse_estimates(res.belief, all_anchors, nodes_.front()->config().spa.p_de);
  for (auto &node : nodes_) {
    std::vector<TraceEvent> t = node->take_trace();
    res.trace.insert(res.trace.end(), t.begin(), t.end());
  }
  return res;
}

std::vector<std::uint8_t> encode_trailer(const DetectionTrailer &t) {
  std::vector<std::uint8_t> out;
  auto put = [&out](std::uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(t.time_index, 4);
  put(static_cast<std::uint32_t>(t.anchor_ids.size()), 2);
  for (std::uint32_t id : t.anchor_ids) put(id, 4);
  return out;
}

DetectionTrailer decode_trailer(std::span<const std::uint8_t> bytes) {
  auto get = [&bytes](std::size_t off, int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    return v;
  };
  if (bytes.size() < 6) throw ProtocolError("detection trailer truncated");
  DetectionTrailer t;
  t.time_index = get(0, 4);
  const std::uint32_t count = get(4, 2);
  if (bytes.size() != 6 + 4 * static_cast<std::size_t>(count))
    throw ProtocolError("detection trailer length mismatch");
  for (std::uint32_t i = 0; i < count; ++i) t.anchor_ids.push_back(get(6 + 4 * i, 4));
  return t;
}

std::string estimate_json_line(int time_index, const Estimate &est, const std::vector<int> &detected) {
  nlohmann::json j = {{"time", time_index},       {"x", est.x.p.x},   {"y", est.x.p.y},
                      {"vx", est.x.v.x},          {"vy", est.x.v.y},  {"detected", detected}};
  return j.dump();
}

}  // namespace dmloc
