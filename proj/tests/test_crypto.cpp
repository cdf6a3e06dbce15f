#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <stdexcept>

#include "hbhc/bytes.hpp"
#include "hbhc/crypto.hpp"

using namespace hbhc;

// Frozen vectors produced by tests/oracle/gen_vectors.py (pure-Python EC +
// RFC 6979, cross-checked against the `cryptography` package).

namespace {

std::array<std::uint8_t, 32> arr32(std::string_view hex) {
  auto b = from_hex(hex);
  REQUIRE(b.has_value());
  REQUIRE(b->size() == 32);
  std::array<std::uint8_t, 32> out;
  std::copy(b->begin(), b->end(), out.begin());
  return out;
}

PublicPoint point(std::string_view hex) {
  auto b = from_hex(hex);
  REQUIRE(b.has_value());
  REQUIRE(b->size() == 64);
  return PublicPoint::from_bytes(std::span<const std::uint8_t, 64>(b->data(), 64));
}

Signature signature(std::string_view hex) {
  auto b = from_hex(hex);
  REQUIRE(b.has_value());
  REQUIRE(b->size() == 64);
  return Signature::from_bytes(std::span<const std::uint8_t, 64>(b->data(), 64));
}

std::mt19937_64 test_rng(0xB0B0CAFEu);

std::array<std::uint8_t, 32> random32(std::mt19937_64& rng) {
  std::array<std::uint8_t, 32> out;
  for (std::size_t i = 0; i < 32; i += 8) put_be64(out.data() + i, rng());
  return out;
}

}  // namespace

TEST_CASE("sha256 matches published vectors") {
  CHECK(to_hex(hash("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(hash("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(hash("deterministic") == hash("deterministic"));
}

TEST_CASE("kdf matches RFC 4231 test case 2") {
  auto mac = kdf(as_bytes("Jefe"), "what do ya want for nothing?");
  CHECK(to_hex(mac) ==
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");

  auto key = random32(test_rng);
  CHECK(kdf(key, "heartbeat") != kdf(key, "children"));
  CHECK(kdf(key, "heartbeat") == kdf(key, "heartbeat"));
  CHECK_THROWS_AS(kdf(std::span<const std::uint8_t>{}, "label"),
                  std::invalid_argument);
}

TEST_CASE("scalar_from_bytes rejection rule") {
  std::array<std::uint8_t, 32> one{};
  one[31] = 1;
  CHECK(scalar_from_bytes(one, "ctx").bytes == one);

  // Group order reduces to zero and must be retried to a nonzero scalar.
  auto order = arr32(
      "fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141");
  auto s = scalar_from_bytes(order, "ctx");
  CHECK(s.bytes != std::array<std::uint8_t, 32>{});

  std::array<std::uint8_t, 32> zero{};
  auto s2 = scalar_from_bytes(zero, "ctx");
  CHECK(s2.bytes != std::array<std::uint8_t, 32>{});

  // Values below the order pass through reduced == unchanged.
  auto below = arr32(
      "fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364140");
  CHECK(scalar_from_bytes(below, "ctx").bytes == below);
}

TEST_CASE("keypair of 1 is the generator") {
  std::array<std::uint8_t, 32> one{};
  one[31] = 1;
  auto g = keypair(SecretScalar{one});
  CHECK(to_hex(g.serialize()) ==
        "79be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798"
        "483ada7726a3c4655da4fbfc0e1108a8fd17b448a68554199c47d08ffb10d4b8");
}

TEST_CASE("distinct scalars give distinct points") {
  std::mt19937_64 rng(42);
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    auto sk = scalar_from_bytes(random32(rng), "sweep");
    seen.insert(to_hex(keypair(sk).serialize()));
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("deterministic signatures match the oracle") {
  struct Vec {
    const char* sk;
    const char* msg;
    const char* pk;
    const char* sig;
  };
  const Vec vecs[] = {
      {"0000000000000000000000000000000000000000000000000000000000000001",
       "test message",
       "79be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798"
       "483ada7726a3c4655da4fbfc0e1108a8fd17b448a68554199c47d08ffb10d4b8",
       "fab80f0a195c3481c924f3a84729dbb4317c1e98b2b856be21712b2006c14f7a"
       "0b9d3f1dbab6b9f4f37f7aee76e259069c9e2438ad0fd95a77d9fe4dcbb6cdbe"},
      {"0102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f20",
       "",
       "84bf7562262bbd6940085748f3be6afa52ae317155181ece31b66351ccffa4b0"
       "8cc43d63b2859d469fee15f31c9edb5324266e6fd0407e87382d60fc4511acd8",
       "0c3decb381709d58c43f8d6e18897ded0287444e0abceda8a7b6481b4871c64d"
       "3667f8a8342f13690768f3cbee0ff5a108d705d71ec1ac9a7c242cd6e198bc07"},
      {"c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721",
       "sample",
       "2c8c31fc9f990c6b55e3865a184a4ce50e09481f2eaeb3e60ec1cea13a6ae645"
       "64b95e4fdb6948c0386e189b006a29f686769b011704275e4459822dc3328085",
       "432310e32cb80eb6503a26ce83cc165c783b870845fb8aad6d970889fcd7a6c8"
       "530128b6b81c548874a6305d93ed071ca6e05074d85863d4056ce89b02bfab69"}};

  for (const auto& v : vecs) {
    SecretScalar sk{arr32(v.sk)};
    CHECK(to_hex(keypair(sk).serialize()) == v.pk);
    auto sig = sign(sk, as_bytes(v.msg));
    CHECK(to_hex(sig.serialize()) == v.sig);
    CHECK(verify(keypair(sk), as_bytes(v.msg), sig));
    CHECK(sign(sk, as_bytes(v.msg)) == sig);  // byte-identical repeat
  }
}

TEST_CASE("sign/verify roundtrip and cross-key rejection") {
  std::mt19937_64 rng(7);
  std::vector<SecretScalar> keys;
  std::vector<PublicPoint> pubs;
  for (int i = 0; i < 10; ++i) {
    keys.push_back(scalar_from_bytes(random32(rng), "key"));
    pubs.push_back(keypair(keys.back()));
  }
  auto msg = as_bytes("cross-key matrix");
  for (int i = 0; i < 10; ++i) {
    auto sig = sign(keys[i], msg);
    for (int j = 0; j < 10; ++j) CHECK(verify(pubs[j], msg, sig) == (i == j));
  }
}

TEST_CASE("mutation sweep rejects every single-bit flip") {
  std::mt19937_64 rng(99);
  // >= 10^4 trials split across message, signature, and pk mutations.
  for (int round = 0; round < 8; ++round) {
    auto sk = scalar_from_bytes(random32(rng), "fuzz");
    auto pk = keypair(sk);
    Bytes msg(32);
    auto rb = random32(rng);
    std::copy(rb.begin(), rb.end(), msg.begin());
    auto sig = sign(sk, msg);
    REQUIRE(verify(pk, msg, sig));

    for (std::size_t bit = 0; bit < msg.size() * 8; ++bit) {
      Bytes m = msg;
      m[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      CHECK_FALSE(verify(pk, m, sig));
    }
    auto raw = sig.serialize();
    for (std::size_t bit = 0; bit < raw.size() * 8; ++bit) {
      auto r = raw;
      r[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      CHECK_FALSE(verify(pk, msg, Signature::from_bytes(r)));
    }
    auto praw = pk.serialize();
    for (std::size_t bit = 0; bit < praw.size() * 8; ++bit) {
      auto p = praw;
      p[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      CHECK_FALSE(verify(PublicPoint::from_bytes(p), msg, sig));
    }
  }
}

TEST_CASE("verify rejects degenerate inputs without crashing") {
  auto sk = scalar_from_bytes(arr32("00000000000000000000000000000000"
                                    "00000000000000000000000000000007"),
                              "x");
  auto pk = keypair(sk);
  auto msg = as_bytes("m");
  auto good = sign(sk, msg);

  Signature zero_r = good;
  zero_r.r.fill(0);
  CHECK_FALSE(verify(pk, msg, zero_r));

  Signature zero_s = good;
  zero_s.s.fill(0);
  CHECK_FALSE(verify(pk, msg, zero_s));

  // High-s twin of a valid signature must be refused.
  Signature high_s = good;
  {
    auto order = from_hex(
        "fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141");
    // order - s, big-endian subtraction
    std::array<std::uint8_t, 32> n{};
    std::copy(order->begin(), order->end(), n.begin());
    int borrow = 0;
    for (int i = 31; i >= 0; --i) {
      int d = int(n[i]) - int(good.s[i]) - borrow;
      borrow = d < 0;
      high_s.s[i] = static_cast<std::uint8_t>(d & 0xff);
    }
  }
  CHECK_FALSE(verify(pk, msg, high_s));

  PublicPoint off_curve = pk;
  off_curve.y[31] ^= 1;
  CHECK_FALSE(verify(off_curve, msg, good));

  PublicPoint zero_pk;
  CHECK_FALSE(verify(zero_pk, msg, good));
}

TEST_CASE("serialized sizes are pinned") {
  auto sk = scalar_from_bytes(arr32("00000000000000000000000000000000"
                                    "00000000000000000000000000000009"),
                              "x");
  CHECK(keypair(sk).serialize().size() == 64);
  CHECK(sign(sk, as_bytes("m")).serialize().size() == 64);
  CHECK(hash("m").size() == 32);
}
