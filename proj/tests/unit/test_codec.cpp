#include "davots/codec.hpp"
#include "davots/error.hpp"
#include "doctest.h"

using namespace davots;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("crc32 known vector") {
  CHECK(crc32(to_bytes("123456789")) == 0xCBF43926u);
  CHECK(crc32(Bytes{}) == 0u);
}

TEST_CASE("base64 round trips every length") {
  CHECK(base64_encode(to_bytes("foobar")) == "Zm9vYmFy");
  CHECK(base64_encode(to_bytes("fo")) == "Zm8=");
  for (std::size_t len = 0; len < 40; ++len) {
    Bytes b(len);
    for (std::size_t i = 0; i < len; ++i) b[i] = static_cast<std::uint8_t>(i * 37 + 11);
    CHECK(base64_decode(base64_encode(b)) == b);
  }
  CHECK_THROWS_AS(base64_decode("abc"), Error);
}

TEST_CASE("little-endian floats") {
  Bytes b;
  const std::vector<float> v{1.0f, -2.5f, 3.14159f};
  append_f32_le(b, v);
  REQUIRE(b.size() == 12);
  CHECK(b[0] == 0x00);
  CHECK(b[3] == 0x3f);
  CHECK(read_f32_le(b) == v);
  Bytes u;
  append_u32_le(u, 0x01020304u);
  CHECK(u == Bytes{4, 3, 2, 1});
  CHECK(read_u32_le(u) == 0x01020304u);
}

TEST_CASE("rng is reproducible and in range") {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(a.next() != c.next());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  Rng s1(3), s2(3);
  auto w = v;
  s1.shuffle(v);
  s2.shuffle(w);
  CHECK(v == w);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
