#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedorch/transport/codec.hpp"

namespace fedorch::wire {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-session frame counters. A "model message" is an ASSIGN or UPDATE frame
// belonging to a federation round (round >= 1); calibration traffic and the
// closing COMMUNITY broadcast are excluded.
struct TrafficCounters {
  std::atomic<std::uint64_t> frames_sent{0};
  std::atomic<std::uint64_t> frames_received{0};
  std::atomic<std::uint64_t> model_sent{0};
  std::atomic<std::uint64_t> model_received{0};
  std::atomic<std::uint64_t> bytes_sent{0};
  std::atomic<std::uint64_t> bytes_received{0};
};

inline bool is_model_message(const Envelope& e) {
  return (e.kind == Kind::Assign || e.kind == Kind::Update) && e.round >= 1;
}

/// One bidirectional, ordered, whole-frame channel between a learner and the
/// controller.
class Session {
 public:
  virtual ~Session() = default;

  void send(const Envelope& e) {
    const auto frame = encode(e, max_payload_);
    send_frame(frame);
    counters_.frames_sent += 1;
    counters_.bytes_sent += frame.size();
    if (is_model_message(e)) counters_.model_sent += 1;
  }

  Envelope recv() {
    const auto frame = recv_frame();
    auto e = decode(frame, max_payload_);
    counters_.frames_received += 1;
    counters_.bytes_received += frame.size();
    if (is_model_message(e)) counters_.model_received += 1;
    return e;
  }

  virtual void close() = 0;

  const TrafficCounters& counters() const noexcept { return counters_; }
  void set_max_payload(std::size_t n) noexcept { max_payload_ = n; }
  std::size_t max_payload() const noexcept { return max_payload_; }

  virtual void send_frame(std::span<const std::uint8_t> frame) = 0;
  virtual std::vector<std::uint8_t> recv_frame() = 0;

 private:
  TrafficCounters counters_;
  std::size_t max_payload_ = kDefaultMaxPayload;
};

namespace detail {

class FrameQueue {
 public:
  void push(std::vector<std::uint8_t> frame) {
    {
      std::lock_guard lock(mu_);
      if (closed_) throw TransportError("in-process channel closed");
      frames_.push_back(std::move(frame));
    }
    cv_.notify_one();
  }

  std::vector<std::uint8_t> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !frames_.empty(); });
    if (frames_.empty()) throw TransportError("peer closed the in-process channel");
    auto f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<std::uint8_t>> frames_;
  bool closed_ = false;
};

}  // namespace detail

// Frames still travel as encoded bytes, identical to what a socket carries.
class InProcessSession final : public Session {
 public:
  InProcessSession(std::shared_ptr<detail::FrameQueue> inbox,
                   std::shared_ptr<detail::FrameQueue> outbox)
      : inbox_(std::move(inbox)), outbox_(std::move(outbox)) {}

  ~InProcessSession() override { close(); }

  void send_frame(std::span<const std::uint8_t> frame) override {
    outbox_->push({frame.begin(), frame.end()});
  }
  std::vector<std::uint8_t> recv_frame() override { return inbox_->pop(); }

  // Closing either end wakes both directions.
  void close() override {
    outbox_->close();
    inbox_->close();
  }

 private:
  std::shared_ptr<detail::FrameQueue> inbox_;
  std::shared_ptr<detail::FrameQueue> outbox_;
};

inline std::pair<std::unique_ptr<Session>, std::unique_ptr<Session>> make_inprocess_pair() {
  auto a_to_b = std::make_shared<detail::FrameQueue>();
  auto b_to_a = std::make_shared<detail::FrameQueue>();
  return {std::make_unique<InProcessSession>(b_to_a, a_to_b),
          std::make_unique<InProcessSession>(a_to_b, b_to_a)};
}

}  // namespace fedorch::wire
