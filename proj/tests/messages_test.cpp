#include <gtest/gtest.h>

#include "imdauth/messages.hpp"

using namespace imdauth;
using namespace imdauth::msg;

namespace {

const Nonce kNonce{1, 2, 3, 4, 5, 6, 7, 8};

}  // namespace

TEST(AppMessages, RoundTrip) {
  const std::vector<AppMessage> all = {
      Challenge{kNonce, 7, "T.T-T"},
      Command{kNonce, 3},
      AuthResult{kNonce, Verdict::accept},
      AuthResult{kNonce, Verdict::timeout},
      Ack{kNonce, Verdict::reject},
  };
  for (const auto& m : all) EXPECT_EQ(decode_app(encode(m)), m);
}

TEST(AppMessages, RejectsTruncationTrailingAndUnknownTags) {
  const auto wire = encode(Challenge{kNonce, 7, "T.T"});
  for (std::size_t n = 0; n < wire.size(); ++n)
    EXPECT_THROW(decode_app(BytesView(wire.data(), n)), DecodeError) << n;
  auto longer = wire;
  longer.push_back(0);
  EXPECT_THROW(decode_app(longer), DecodeError);
  auto bad = wire;
  bad[0] = 0x7f;
  EXPECT_THROW(decode_app(bad), DecodeError);
}

TEST(AppMessages, RejectsOutOfRangeVerdict) {
  auto wire = encode(AuthResult{kNonce, Verdict::accept});
  wire.back() = 9;
  EXPECT_THROW(decode_app(wire), DecodeError);
}

TEST(Control, RoundTrip) {
  const std::vector<Control> all = {
      Ready{}, Go{}, Abort{4}, Login{77, "alice", "pin", 5}, LoginOk{77}, LoginDenied{77, DenyReason::busy},
  };
  for (const auto& c : all) {
    const auto wire = encode(c);
    EXPECT_FALSE(is_dtls(wire));
    const auto back = decode_control(wire);
    ASSERT_EQ(back.index(), c.index());
    if (const auto* l = std::get_if<Login>(&c)) {
      const auto& b = std::get<Login>(back);
      EXPECT_EQ(b.login_id, l->login_id);
      EXPECT_EQ(b.identity, l->identity);
      EXPECT_EQ(b.credential, l->credential);
      EXPECT_EQ(b.dose, l->dose);
    }
    if (const auto* d = std::get_if<LoginDenied>(&c)) {
      EXPECT_EQ(std::get<LoginDenied>(back).reason, d->reason);
    }
  }
}

TEST(Control, GarbageIsRejected) {
  EXPECT_THROW(decode_control(Bytes{}), DecodeError);
  EXPECT_THROW(decode_control(Bytes{0xee}), DecodeError);
  auto login = encode(Login{1, "bob", "x", 2});
  login.pop_back();
  EXPECT_THROW(decode_control(login), DecodeError);
}

TEST(Control, DtlsContentTypesAreRecognised) {
  for (std::uint8_t t = 20; t <= 23; ++t) EXPECT_TRUE(is_dtls(Bytes{t, 0xfe, 0xfd}));
  EXPECT_FALSE(is_dtls(Bytes{}));
}

TEST(Names, VerdictsAndReasons) {
  EXPECT_EQ(to_string(Verdict::accept), "accept");
  EXPECT_EQ(to_string(DenyReason::unknown_identity), "unknown_identity");
}
