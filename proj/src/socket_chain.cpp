#include "dmloc/socket_chain.hpp"

#include <poll.h>

#include <spdlog/spdlog.h>

namespace dmloc {

namespace {

using namespace std::chrono_literals;

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
}

}  // namespace

std::vector<std::uint8_t> encode_error(const ErrorReport &e) {
  std::vector<std::uint8_t> out;
  put_u32(out, kErrorMagic);
  put_u32(out, e.time_index);
  out.push_back(static_cast<std::uint8_t>(e.panel_id & 0xff));
  out.push_back(static_cast<std::uint8_t>(e.panel_id >> 8));
  out.insert(out.end(), e.what.begin(), e.what.end());
  return out;
}

bool is_error_frame(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 10 && get_u32(bytes, 0) == kErrorMagic;
}

ErrorReport decode_error(std::span<const std::uint8_t> bytes) {
  if (!is_error_frame(bytes)) throw ProtocolError("not an error report");
  ErrorReport e;
  e.time_index = get_u32(bytes, 4);
  e.panel_id = static_cast<std::uint16_t>(bytes[8] | (bytes[9] << 8));
  e.what.assign(bytes.begin() + 10, bytes.end());
  return e;
}

PanelServer::PanelServer(std::unique_ptr<PanelNode> node, MeasurementSource source,
                         ServerOptions opts)
    : node_(std::move(node)),
      panel_id_(node_->panel_id()),
      source_(std::move(source)),
      opts_(std::move(opts)),
      listener_(opts_.bind) {}

PanelServer::~PanelServer() { stop(); }

Endpoint PanelServer::endpoint() const { return {opts_.bind.host, listener_.port()}; }

void PanelServer::set_next(const Endpoint &next) { opts_.next = next; }

void PanelServer::start() {
  thread_ = std::thread([this] { run(); });
}

void PanelServer::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  listener_.close();
  downstream_.close();
}

void PanelServer::run() {
  spdlog::debug("panel {} listening on {}", panel_id_, endpoint().str());
  while (!stop_) {
    std::optional<Socket> conn = listener_.accept(100ms);
    if (!conn) continue;
    try {
      serve_connection(*conn);
    } catch (const NetError &e) {
      spdlog::warn("panel {}: upstream link: {}", panel_id_, e.what());
    }
  }
}

void PanelServer::serve_connection(Socket &upstream) {
  while (!stop_) {
    if (!wait_readable(upstream.fd(), 100ms)) continue;
    auto frame = recv_frame(upstream, opts_.recv_timeout);
    if (!frame) return;  // upstream closed
    if (is_error_frame(*frame)) continue;
    auto trailer = recv_frame(upstream, opts_.recv_timeout);
    if (!trailer) throw NetError("connection closed before detection trailer");
    handle(*frame, *trailer);
  }
}

std::vector<AnchorBelief> PanelServer::last_anchors() const {
  std::lock_guard lock(mu_);
  return last_anchors_;
}

std::vector<TraceEvent> PanelServer::take_trace() {
  std::lock_guard lock(mu_);
  std::vector<TraceEvent> out;
  out.swap(trace_);
  return out;
}

void PanelServer::handle(std::span<const std::uint8_t> frame,
                         std::span<const std::uint8_t> trailer_bytes) {
  ChainMessage msg;
  DetectionTrailer trailer;
  try {
    msg = decode_message(frame);
    trailer = decode_trailer(trailer_bytes);
  } catch (const ProtocolError &e) {
    report(0, std::string("decode error: ") + e.what());
    return;
  }
  const int in_time = static_cast<int>(msg.time_index);
  if (node_->is_duplicate(in_time)) {
    spdlog::warn("panel {}: dropping duplicate frame for time {}", panel_id_, in_time);
    return;
  }
  const int t = node_->is_head() ? in_time + 1 : in_time;

  ParticleCloud out;
  try {
    out = node_->process(msg.payload, source_(t));
  } catch (const std::exception &e) {
    report(static_cast<std::uint32_t>(t), e.what());
    return;
  }

  const std::int64_t start = now_ns();
  const std::vector<std::uint8_t> bytes = encode_message(
      {static_cast<std::uint32_t>(t), static_cast<std::uint16_t>(panel_id_), out});
  trailer.time_index = static_cast<std::uint32_t>(t);
  for (int id : node_->detected_ids()) trailer.anchor_ids.push_back(static_cast<std::uint32_t>(id));
  {
    std::lock_guard lock(mu_);
    last_anchors_ = node_->anchors();
  }
  forward(bytes, encode_trailer(trailer), static_cast<std::uint32_t>(t));
  node_->record(Stage::kForward, t, start, now_ns());
  node_->prepare_next();

  std::vector<TraceEvent> events = node_->take_trace();
  std::lock_guard lock(mu_);
  trace_.insert(trace_.end(), events.begin(), events.end());
}

void PanelServer::forward(std::span<const std::uint8_t> frame,
                          std::span<const std::uint8_t> trailer, std::uint32_t time_index) {
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= opts_.backoff.size(); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(opts_.backoff[attempt - 1]);
    try {
      if (downstream_.valid() && downstream_.peer_closed()) downstream_.close();
      if (!downstream_.valid()) downstream_ = connect_to(opts_.next);
      send_frame(downstream_, frame);
      send_frame(downstream_, trailer);
      return;
    } catch (const NetError &e) {
      last_error = e.what();
      downstream_.close();
      spdlog::debug("panel {}: forward attempt {} failed: {}", panel_id_, attempt + 1, last_error);
    }
  }
  report(time_index, "link to " + opts_.next.str() + " failed: " + last_error);
}

void PanelServer::report(std::uint32_t time_index, const std::string &what) {
  spdlog::error("panel {} time {}: {}", panel_id_, time_index, what);
  if (!opts_.collector) return;
  try {
    Socket s = connect_to(*opts_.collector);
    send_frame(s, encode_error({time_index, static_cast<std::uint16_t>(panel_id_), what}));
  } catch (const NetError &e) {
    spdlog::error("panel {}: cannot reach collector: {}", panel_id_, e.what());
  }
}

Collector::Collector(const Endpoint &bind, std::chrono::milliseconds timeout)
    : listener_(bind), timeout_(timeout) {}

Endpoint Collector::endpoint() const { return {"127.0.0.1", listener_.port()}; }

Collector::Output Collector::exchange(const ParticleCloud &prev_belief) {
  const int t = prev_belief.time_index + 1;
  const std::vector<std::uint8_t> frame =
      encode_message({static_cast<std::uint32_t>(prev_belief.time_index), 0, prev_belief});
  const std::vector<std::uint8_t> trailer =
      encode_trailer({static_cast<std::uint32_t>(prev_belief.time_index), {}});

  bool sent = false;
  std::string last_error;
  const std::chrono::milliseconds backoff[] = {0ms, 50ms, 100ms, 200ms};
  for (auto delay : backoff) {
    std::this_thread::sleep_for(delay);
    try {
      if (head_link_.valid() && head_link_.peer_closed()) head_link_.close();
      if (!head_link_.valid()) head_link_ = connect_to(head_);
      send_frame(head_link_, frame);
      send_frame(head_link_, trailer);
      sent = true;
      break;
    } catch (const NetError &e) {
      last_error = e.what();
      head_link_.close();
    }
  }
  if (!sent) throw TimestepAborted(t, 1, "link to head failed: " + last_error);

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimestepAborted(t, 0, "timed out waiting for the tail");

    if (auto conn = listener_.accept(0ms)) inbound_.push_back(std::move(*conn));
    std::vector<pollfd> fds;
    for (const Socket &s : inbound_) fds.push_back({s.fd(), POLLIN, 0});
    const int wait = static_cast<int>(std::min<std::int64_t>(left.count(), 20));
    if (fds.empty() || ::poll(fds.data(), fds.size(), wait) <= 0) {
      if (fds.empty()) std::this_thread::sleep_for(std::chrono::milliseconds(wait));
      continue;
    }
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      std::optional<std::vector<std::uint8_t>> in;
      try {
        in = recv_frame(inbound_[i], timeout_);
      } catch (const NetError &) {
        in.reset();
      }
      if (!in) {
        inbound_[i].close();
        continue;
      }
      if (is_error_frame(*in)) {
        const ErrorReport e = decode_error(*in);
        throw TimestepAborted(static_cast<int>(e.time_index), e.panel_id,
                              "panel " + std::to_string(e.panel_id) + ": " + e.what);
      }
      auto tr = recv_frame(inbound_[i], timeout_);
      if (!tr) throw TimestepAborted(t, 0, "tail closed before detection trailer");
      ChainMessage msg = decode_message(*in);
      if (static_cast<int>(msg.time_index) != t)
        throw TimestepAborted(t, msg.panel_id,
                              "collector got time " + std::to_string(msg.time_index) +
                                  ", expected " + std::to_string(t));
      const DetectionTrailer trailer_in = decode_trailer(*tr);
      Output out;
      out.belief = std::move(msg.payload);
      out.belief.role = MessageRole::kBelief;
      for (std::uint32_t id : trailer_in.anchor_ids) out.detected.push_back(static_cast<int>(id));
      std::erase_if(inbound_, [](const Socket &s) { return !s.valid(); });
      return out;
    }
    std::erase_if(inbound_, [](const Socket &s) { return !s.valid(); });
  }
}

SocketChain::SocketChain(const Scenario &scn, const FilterConfig &cfg, std::uint64_t seed,
                         std::uint32_t run, std::chrono::milliseconds timeout)
    : p_de_(cfg.spa.p_de) {
  collector_ = std::make_unique<Collector>(Endpoint{"127.0.0.1", 0}, timeout);
  auto nodes = build_nodes(scn, cfg, seed, run);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    MeasurementSource source = [this, i](int t) {
      std::lock_guard lock(mu_);
      if (t != current_time_) throw ProtocolError("no measurements for time " + std::to_string(t));
      return current_.at(i);
    };
    ServerOptions opts;
    opts.bind = {"127.0.0.1", 0};
    opts.collector = collector_->endpoint();
    opts.recv_timeout = timeout;
    servers_.push_back(std::make_unique<PanelServer>(std::move(nodes[i]), source, opts));
  }
  for (std::size_t i = 0; i < servers_.size(); ++i)
    servers_[i]->set_next(i + 1 < servers_.size() ? servers_[i + 1]->endpoint()
                                                  : collector_->endpoint());
  collector_->set_head(servers_.front()->endpoint());
  for (auto &s : servers_) s->start();
}

SocketChain::~SocketChain() {
  for (auto &s : servers_) s->stop();
}

void SocketChain::kill_panel(std::size_t i) { servers_.at(i)->stop(); }

TimestepResult SocketChain::run_timestep(const ParticleCloud &prev_belief,
                                         const std::vector<MeasurementSet> &measurements) {
  if (measurements.size() != servers_.size())
    throw std::invalid_argument("one measurement set per panel required");
  TimestepResult res;
  res.time_index = prev_belief.time_index + 1;
  {
    std::lock_guard lock(mu_);
    current_ = measurements;
    current_time_ = res.time_index;
  }
  Collector::Output out = collector_->exchange(prev_belief);
  res.belief = std::move(out.belief);
  res.detected = std::move(out.detected);
  res.messages = servers_.size();
  std::vector<AnchorBelief> all_anchors;
  for (auto &s : servers_) {
    res.anchors.push_back(s->last_anchors());
    all_anchors.insert(all_anchors.end(), res.anchors.back().begin(), res.anchors.back().end());
    std::vector<TraceEvent> t = s->take_trace();
    res.trace.insert(res.trace.end(), t.begin(), t.end());
  }
  res.estimate = mmse_estimates(res.belief, all_anchors, p_de_);
  return res;
}

std::unique_ptr<Transport> make_transport(TransportKind kind, const Scenario &scn,
                                          const FilterConfig &cfg, std::uint64_t seed,
                                          std::uint32_t run) {
  if (kind == TransportKind::kSocket) return std::make_unique<SocketChain>(scn, cfg, seed, run);
  return std::make_unique<InProcessChain>(build_nodes(scn, cfg, seed, run));
}

}  // namespace dmloc
