// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "secm2m/channel.hpp"
#include "secm2m/error.hpp"
#include "test_support.hpp"

using namespace secm2m;
using namespace std::chrono_literals;
using fixtures::identity;
using fixtures::pinned_pair;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Timeout;
}

/// Transport decorator that keeps a copy of everything written through it.
class Tap final : public Transport {
 public:
  explicit Tap(Transport& inner) : inner_(inner) {}
  void write_all(ByteView data) override {
    {
      std::lock_guard lock(mutex_);
      append(written_, data);
    }
    inner_.write_all(data);
  }
  void read_exact(std::span<std::uint8_t> out) override { inner_.read_exact(out); }
  void close() override { inner_.close(); }
  void set_read_timeout(Millis t) override { inner_.set_read_timeout(t); }
  Bytes written() {
    std::lock_guard lock(mutex_);
    return written_;
  }

 private:
  Transport& inner_;
  std::mutex mutex_;
  Bytes written_;
};

struct Pair {
  std::unique_ptr<Transport> client_end, server_end;
  std::unique_ptr<Tap> client_tap;
  std::unique_ptr<SecureChannel> client, server;
  ServerContext context;
  ErrorCode server_error = ErrorCode::Timeout;
  ErrorCode client_error = ErrorCode::Timeout;

  wire::SecureMessage next_client_frame() {
    return wire::decode_frame(read_frame_bytes(*server_end)).msg;
  }
};

std::unique_ptr<Pair> handshake(ChannelConfig client_cfg, ChannelConfig server_cfg, Clock& clock = SteadyClock::instance(),
                                 EventLog& events = null_event_log()) {
  auto p = std::make_unique<Pair>();
  std::tie(p->client_end, p->server_end) = make_memory_pipe();
  p->client_tap = std::make_unique<Tap>(*p->client_end);
  p->client = std::make_unique<SecureChannel>(client_cfg, *p->client_tap, clock, events);
  p->server = std::make_unique<SecureChannel>(server_cfg, *p->server_end, clock, events);
  std::thread server([&] {
    p->server_error = code_of([&] { p->server->accept(p->context); });
  });
  p->client_error = code_of([&] { p->client->open(); });
  server.join();
  return p;
}

std::unique_ptr<Pair> open_pair(SecurityMode mode = SecurityMode::SignAndEncrypt,
                                ProfileId profile = ProfileId::Aes256Sha256RsaPss,
                                Clock& clock = SteadyClock::instance(), EventLog& events = null_event_log(),
                                std::function<void(ChannelConfig&, ChannelConfig&)> tweak = {}) {
  auto [c, s] = pinned_pair(profile, mode);
  if (tweak) tweak(c, s);
  auto p = handshake(c, s, clock, events);
  EXPECT_EQ(p->client_error, ErrorCode::Timeout) << to_string(p->client_error);
  EXPECT_EQ(p->server_error, ErrorCode::Timeout) << to_string(p->server_error);
  return p;
}

}  // namespace

TEST(Handshake, MutuallyPinnedPeersDeriveMirroredKeys) {
  for (auto profile : {ProfileId::Aes128Sha256RsaOaep, ProfileId::Basic256Sha256, ProfileId::Aes256Sha256RsaPss}) {
    auto p = open_pair(SecurityMode::SignAndEncrypt, profile);
    const auto cs = p->client->state();
    const auto ss = p->server->state();
    EXPECT_EQ(cs.phase, ChannelPhase::Open);
    EXPECT_EQ(ss.phase, ChannelPhase::Open);
    EXPECT_EQ(cs.channel_id, ss.channel_id);
    EXPECT_EQ(cs.active_token->token_id, 1u);
    EXPECT_EQ(cs.active_token->send_keys, ss.active_token->receive_keys);
    EXPECT_EQ(cs.active_token->receive_keys, ss.active_token->send_keys);
    EXPECT_EQ(cs.active_token->send_keys.encryption_key.size(), lookup_profile(profile).sym_key_bytes());
    EXPECT_EQ(cs.next_send_sequence, 1u);
    EXPECT_EQ(ss.expected_receive_sequence, 1u);
    EXPECT_EQ(p->server->peer_certificate(), identity("controller").cert);
  }
}

TEST(Handshake, UntrustedServerCertificateFaultsClient) {
  auto [c, s] = pinned_pair();
  c.peer_certificate = identity("device").cert;
  c.trust_store = {identity("someone-else").cert};
  auto p = handshake(c, s);
  EXPECT_EQ(p->client_error, ErrorCode::CertificateUntrusted);
  EXPECT_EQ(p->client->phase(), ChannelPhase::Faulted);
}

TEST(Handshake, UntrustedClientIsRejectedByServer) {
  auto [c, s] = pinned_pair();
  s.trust_store = {identity("someone-else").cert};
  auto p = handshake(c, s);
  EXPECT_EQ(p->server_error, ErrorCode::CertificateUntrusted);
  EXPECT_EQ(p->client_error, ErrorCode::CertificateUntrusted);
  EXPECT_EQ(p->server->phase(), ChannelPhase::Faulted);
}

TEST(Handshake, ProfileMismatchWithSingleProfileServer) {
  auto [c, s] = pinned_pair();
  c.profile = ProfileId::Basic256Sha256;
  auto p = handshake(c, s);
  EXPECT_EQ(p->client_error, ErrorCode::ProfileMismatch);
  EXPECT_EQ(p->server_error, ErrorCode::ProfileMismatch);
}

TEST(Handshake, ModeMismatchIsRejected) {
  auto [c, s] = pinned_pair();
  c.security_mode = SecurityMode::None;
  auto p = handshake(c, s);
  EXPECT_EQ(p->client_error, ErrorCode::ProfileMismatch);
  auto [c2, s2] = pinned_pair();
  c2.security_mode = SecurityMode::Sign;
  auto p2 = handshake(c2, s2);
  EXPECT_EQ(p2->server_error, ErrorCode::ProfileMismatch);
}

TEST(Handshake, SequentialClientsGetDistinctChannelIds) {
  auto [c, s] = pinned_pair();
  ServerContext ctx;
  std::set<std::uint32_t> ids;
  for (int i = 0; i < 2; ++i) {
    auto [a, b] = make_memory_pipe();
    SecureChannel client(c, *a), server(s, *b);
    std::thread t([&] { server.accept(ctx); });
    client.open();
    t.join();
    ids.insert(server.state().channel_id);
  }
  EXPECT_EQ(ids.size(), 2u);
}

TEST(Handshake, ReplayedOpenRequestIsRejected) {
  auto p = open_pair();
  const Bytes captured = p->client_tap->written();  // exactly the OPN request
  auto [c, s] = pinned_pair();
  auto [attacker, server_end] = make_memory_pipe();
  SecureChannel server(s, *server_end);
  attacker->write_all(captured);
  EXPECT_EQ(code_of([&] { server.accept(p->context); }), ErrorCode::ReplayDetected);
  const auto reply = wire::decode_frame(read_frame_bytes(*attacker)).msg;
  EXPECT_EQ(reply.msg_type, wire::MsgType::Error);
  EXPECT_EQ(wire::decode_error_body(reply.body).first, static_cast<std::uint32_t>(ErrorCode::ReplayDetected));
}

TEST(Handshake, MalformedOpenBody) {
  auto [c, s] = pinned_pair();
  auto [attacker, server_end] = make_memory_pipe();
  SecureChannel server(s, *server_end);
  wire::SecureMessage junk;
  junk.msg_type = wire::MsgType::Open;
  junk.body = to_bytes("definitely not a handshake");
  attacker->write_all(wire::encode_frame(junk));
  ServerContext ctx;
  EXPECT_EQ(code_of([&] { server.accept(ctx); }), ErrorCode::HandshakeCryptoFailure);
  EXPECT_EQ(server.phase(), ChannelPhase::Faulted);
}

TEST(Handshake, ConfigValidation) {
  auto [c, s] = pinned_pair();
  c.profile = ProfileId::TlsRsaAes256CbcSha256;
  auto [a, b] = make_memory_pipe();
  SecureChannel ch(c, *a);
  EXPECT_EQ(code_of([&] { ch.open(); }), ErrorCode::InvalidConfig);
  ChannelConfig zero = pinned_pair().first;
  zero.rate_limit_per_s = 0;
  EXPECT_EQ(code_of([&] { zero.validate(); }), ErrorCode::InvalidConfig);
}

TEST(Messages, SequenceNumbersOnTheWire) {
  auto p = open_pair();
  for (int i = 0; i < 3; ++i) p->client->send(10 + i, to_bytes("ping"));
  for (std::uint32_t expected = 1; expected <= 3; ++expected) {
    auto f = p->next_client_frame();
    EXPECT_EQ(f.sequence_number, expected);
    EXPECT_EQ(p->server->receive(f), to_bytes("ping"));
  }
  EXPECT_EQ(p->client->state().next_send_sequence, 4u);
  EXPECT_EQ(p->server->state().expected_receive_sequence, 4u);
}

TEST(Messages, ModeNoneIsVerbatimAndSignIsVisibleButAuthenticated) {
  auto none = open_pair(SecurityMode::None);
  none->client->send(1, to_bytes("meter reading 231.7V"));
  auto f = none->next_client_frame();
  EXPECT_EQ(f.body, to_bytes("meter reading 231.7V"));

  auto sign = open_pair(SecurityMode::Sign);
  sign->client->send(1, to_bytes("meter reading 231.7V"));
  auto g = sign->next_client_frame();
  EXPECT_TRUE(contains(g.body, to_bytes("meter reading 231.7V")));
  g.body[0] ^= 1;
  EXPECT_EQ(code_of([&] { sign->server->receive(g); }), ErrorCode::SignatureInvalid);
  EXPECT_EQ(sign->server->phase(), ChannelPhase::Open);
}

TEST(Messages, ReplayAndOutOfOrder) {
  auto p = open_pair();
  std::vector<wire::SecureMessage> frames;
  for (int i = 0; i < 7; ++i) {
    p->client->send(i, to_bytes("m" + std::to_string(i)));
    frames.push_back(p->next_client_frame());
  }
  for (int i = 0; i < 4; ++i) p->server->receive(frames[i]);
  ASSERT_EQ(p->server->state().expected_receive_sequence, 5u);
  EXPECT_EQ(code_of([&] { p->server->receive(frames[3]); }), ErrorCode::ReplayDetected);
  EXPECT_EQ(code_of([&] { p->server->receive(frames[6]); }), ErrorCode::OutOfOrder);
  EXPECT_EQ(p->server->receive(frames[4]), to_bytes("m4"));
  EXPECT_EQ(p->server->state().expected_receive_sequence, 6u);
}

TEST(Messages, DisabledSequenceCheckDeliversReplays) {
  auto p = open_pair(SecurityMode::SignAndEncrypt, ProfileId::Aes256Sha256RsaPss, SteadyClock::instance(),
                     null_event_log(), [](ChannelConfig&, ChannelConfig& s) { s.evaluate_sequence_numbers = false; });
  p->client->send(1, to_bytes("close breaker"));
  auto f = p->next_client_frame();
  EXPECT_EQ(p->server->receive(f), to_bytes("close breaker"));
  EXPECT_EQ(p->server->receive(f), to_bytes("close breaker"));
}

TEST(Messages, TokenExpiry) {
  ManualClock clock;
  auto p = open_pair(SecurityMode::SignAndEncrypt, ProfileId::Aes256Sha256RsaPss, clock, null_event_log(),
                     [](ChannelConfig& c, ChannelConfig& s) { c.token_lifetime_ms = s.token_lifetime_ms = 1000; });
  EXPECT_FALSE(p->client->renewal_due());
  clock.advance(800ms);
  EXPECT_TRUE(p->client->renewal_due());
  p->client->send(1, to_bytes("ok"));
  clock.advance(201ms);
  EXPECT_EQ(code_of([&] { p->client->send(2, to_bytes("late")); }), ErrorCode::TokenExpired);
  EXPECT_EQ(code_of([&] { p->server->receive(p->next_client_frame()); }), ErrorCode::TokenExpired);
}

TEST(Messages, SendRequiresOpenChannel) {
  auto [c, s] = pinned_pair();
  auto [a, b] = make_memory_pipe();
  SecureChannel ch(c, *a);
  EXPECT_EQ(code_of([&] { ch.send(1, to_bytes("x")); }), ErrorCode::ChannelNotOpen);
  wire::SecureMessage m;
  EXPECT_EQ(code_of([&] { ch.receive(m); }), ErrorCode::ChannelNotOpen);
}

namespace {

/// Client renews while a server thread runs its frame loop; the loop answers
/// the OPN inline and returns with the next delivered MSG, which the caller
/// supplies through `after`.
Delivery renew_then(Pair& p, bool reset, const std::function<void()>& after) {
  std::optional<Delivery> got;
  std::thread server([&] { got = p.server->receive(); });
  p.client->renew(reset);
  after();
  server.join();
  EXPECT_TRUE(got.has_value());
  return got.value_or(Delivery{});
}

}  // namespace

TEST(Renewal, NewTokenIdAndContinuingSequence) {
  auto p = open_pair();
  p->client->send(1, to_bytes("before"));
  EXPECT_EQ(p->server->receive(p->next_client_frame()), to_bytes("before"));

  auto d = renew_then(*p, false, [&] { p->client->send(2, to_bytes("after")); });
  EXPECT_EQ(d.payload, to_bytes("after"));
  const auto cs = p->client->state();
  const auto ss = p->server->state();
  EXPECT_EQ(cs.active_token->token_id, 2u);
  EXPECT_EQ(ss.active_token->token_id, 2u);
  EXPECT_EQ(cs.previous_token->token_id, 1u);
  EXPECT_EQ(cs.next_send_sequence, 3u);
  EXPECT_EQ(ss.expected_receive_sequence, 3u);
  EXPECT_EQ(cs.active_token->send_keys, ss.active_token->receive_keys);
  EXPECT_NE(cs.active_token->send_keys, cs.previous_token->send_keys);
}

TEST(Renewal, OldTokenAcceptedOnlyWithinOverlap) {
  ManualClock clock;
  auto p = open_pair(SecurityMode::SignAndEncrypt, ProfileId::Aes256Sha256RsaPss, clock, null_event_log(),
                     [](ChannelConfig& c, ChannelConfig& s) { c.token_lifetime_ms = s.token_lifetime_ms = 100000; });
  p->client->send(1, to_bytes("old-1"));
  p->client->send(2, to_bytes("old-2"));
  const Bytes old1 = read_frame_bytes(*p->server_end);
  const auto old2 = p->next_client_frame();

  // In-flight frame under token 1 arrives after the renewal, inside the window.
  auto d = renew_then(*p, false, [&] { p->client_end->write_all(old1); });
  EXPECT_EQ(d.payload, to_bytes("old-1"));

  clock.advance(25001ms);  // window = 25% of the old 100 s lifetime
  EXPECT_EQ(code_of([&] { p->server->receive(old2); }), ErrorCode::UnknownToken);
}

TEST(Renewal, SequenceWrapForcesResetAndInvalidatesOldFrames) {
  auto p = open_pair(SecurityMode::SignAndEncrypt, ProfileId::Aes256Sha256RsaPss, SteadyClock::instance(),
                     null_event_log(),
                     [](ChannelConfig& c, ChannelConfig& s) { c.sequence_wrap_limit = s.sequence_wrap_limit = 3; });
  std::vector<wire::SecureMessage> pre_wrap;
  for (int i = 1; i <= 3; ++i) {
    p->client->send(i, to_bytes("pre"));
    pre_wrap.push_back(p->next_client_frame());
    p->server->receive(pre_wrap.back());
  }
  EXPECT_TRUE(p->client->sequence_exhausted());
  EXPECT_TRUE(p->client->renewal_due());
  EXPECT_EQ(code_of([&] { p->client->send(4, to_bytes("x")); }), ErrorCode::SequenceWrap);

  auto d = renew_then(*p, true, [&] { p->client->send(5, to_bytes("post")); });
  EXPECT_EQ(d.payload, to_bytes("post"));
  EXPECT_EQ(p->client->state().next_send_sequence, 2u);
  EXPECT_FALSE(p->server->state().previous_token.has_value());
  for (const auto& f : pre_wrap) EXPECT_EQ(code_of([&] { p->server->receive(f); }), ErrorCode::UnknownToken);
}

TEST(Replay, RandomizedSessionsNeverRedeliver) {
  std::mt19937 rng(2024);
  for (auto mode : {SecurityMode::Sign, SecurityMode::SignAndEncrypt}) {
    auto p = open_pair(mode);
    std::vector<wire::SecureMessage> capture;
    for (int i = 0; i < 120; ++i) {
      Bytes payload(1 + rng() % 80);
      for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
      p->client->send(i, payload);
      capture.push_back(p->next_client_frame());
      ASSERT_EQ(p->server->receive(capture.back()), payload);
      // Re-inject a random earlier frame from the capture.
      const auto& old = capture[rng() % capture.size()];
      const auto code = code_of([&] { p->server->receive(old); });
      ASSERT_TRUE(code == ErrorCode::ReplayDetected || code == ErrorCode::UnknownToken) << to_string(code);
    }
  }
}

TEST(Confidentiality, NoPlaintextWindowOnTheWire) {
  std::mt19937 rng(77);
  auto p = open_pair();
  std::vector<Bytes> sent;
  Bytes capture;
  for (int i = 0; i < 200; ++i) {
    Bytes payload(8 + rng() % 120);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    p->client->send(i, payload);
    sent.push_back(payload);
    append(capture, read_frame_bytes(*p->server_end));
  }
  for (const auto& m : sent)
    for (std::size_t at = 0; at + 8 <= m.size(); ++at)
      ASSERT_FALSE(contains(capture, ByteView(m).subspan(at, 8)));
}

TEST(RateLimit, FormulaPoints) {
  EXPECT_EQ(rate_limit_delay(50, 50, 1000), 0ms);
  EXPECT_EQ(rate_limit_delay(10, 50, 1000), 0ms);
  EXPECT_EQ(rate_limit_delay(100, 50, 1000), 1000ms);
  EXPECT_EQ(rate_limit_delay(100, 50, 300), 300ms);
  EXPECT_EQ(rate_limit_delay(75, 50, 1000), 500ms);
  EXPECT_EQ(code_of([] { rate_limit_delay(5, 0, 1000); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { RateLimiter(0, 1000); }), ErrorCode::InvalidConfig);
}

TEST(RateLimit, WindowSlides) {
  RateLimiter limiter(2, 1000);
  TimePoint t{};
  EXPECT_EQ(limiter.admit(t), 0ms);
  EXPECT_EQ(limiter.admit(t + 10ms), 0ms);
  EXPECT_EQ(limiter.admit(t + 20ms), 500ms);  // 3 in window, limit 2
  EXPECT_EQ(limiter.admit(t + 1015ms), 0ms);  // first two expired
  EXPECT_EQ(limiter.window_count(), 2u);
}

namespace {

/// Discrete-event model of a single-server queue where each admission is
/// followed by the limiter's delay. Independent of RateLimiter: it keeps the
/// sliding window as a plain vector and recomputes the delay formula inline.
double simulated_throughput(std::uint32_t limit, double offered_per_s, double seconds, double measure_from) {
  std::vector<double> arrivals;
  for (double t = 0; t < seconds; t += 1.0 / offered_per_s) arrivals.push_back(t);
  std::vector<double> admitted;
  double server_free = 0;
  std::size_t processed_in_window = 0;
  for (double arrival : arrivals) {
    const double start = std::max(arrival, server_free);
    if (start >= seconds) break;
    std::size_t in_window = 1;
    for (double a : admitted)
      if (start - a < 1.0) ++in_window;
    admitted.push_back(start);
    double delay_s = 0;
    if (in_window > limit) delay_s = std::min(1.0, double(in_window - limit) / limit);
    const double done = start + delay_s;
    server_free = done;
    if (done >= measure_from && done < seconds) ++processed_in_window;
  }
  return processed_in_window / (seconds - measure_from);
}

}  // namespace

TEST(RateLimit, SimulationBoundsThroughputUnderTenfoldLoad) {
  for (std::uint32_t limit : {20u, 50u, 100u, 200u}) {
    const double rate = simulated_throughput(limit, 10.0 * limit, 10.0, 5.0);
    EXPECT_LE(rate, 1.1 * limit) << limit;
    EXPECT_GT(rate, 0.5 * limit) << limit;  // throttled, not starved
  }
  // The window admits one or two messages per second above the limit, so for
  // small limits the relative overshoot exceeds 10%.
  for (std::uint32_t limit : {5u, 10u}) EXPECT_LE(simulated_throughput(limit, 10.0 * limit, 10.0, 5.0), limit + 2.0);
  // At twice the limit the formula yields the full configured delay.
  EXPECT_EQ(rate_limit_delay(2 * 50, 50, 1000), 1000ms);
}

TEST(RateLimit, ChannelDelaysButDeliversEverything) {
  ManualClock clock;
  EventLog events;
  auto p = open_pair(SecurityMode::SignAndEncrypt, ProfileId::Aes256Sha256RsaPss, clock, events,
                     [](ChannelConfig&, ChannelConfig& s) { s.rate_limit_per_s = 5; });
  const TimePoint start = clock.now();
  for (int i = 0; i < 20; ++i) {
    p->client->send(i, to_bytes("flood"));
    EXPECT_EQ(p->server->receive(p->next_client_frame()), to_bytes("flood"));
  }
  EXPECT_GT(events.count("throttled"), 0u);
  EXPECT_GT(clock.now() - start, 2s);  // manual clock advanced only by artificial delays
  EXPECT_EQ(p->server->phase(), ChannelPhase::Open);
}

TEST(Events, ReplayIsLogged) {
  EventLog events;
  auto p = open_pair(SecurityMode::SignAndEncrypt, ProfileId::Aes256Sha256RsaPss, SteadyClock::instance(), events);
  p->client->send(1, to_bytes("a"));
  auto f = p->next_client_frame();
  p->server->receive(f);
  EXPECT_THROW(p->server->receive(f), Error);
  EXPECT_EQ(events.count("replay_detected"), 1u);
  EXPECT_EQ(events.count("channel_open"), 1u);
  EXPECT_EQ(events.count("channel_accept"), 1u);
  const auto all = events.events();
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LE(all[i - 1].t_ms, all[i].t_ms);
  EXPECT_NE(EventLog::format(all.back()).find("\"event\":\"replay_detected\""), std::string::npos);
}

TEST(Close, PeerSeesOrderlyClose) {
  auto p = open_pair();
  p->client->close();
  EXPECT_EQ(p->client->phase(), ChannelPhase::Closed);
  EXPECT_FALSE(p->server->receive().has_value());
  EXPECT_EQ(p->server->phase(), ChannelPhase::Closed);
}
