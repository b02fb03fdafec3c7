#include <doctest.h>

#include "ecgauth/io_util.hpp"
#include "tempdir.hpp"

using namespace ecgauth;

namespace {

std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

}  // namespace

TEST_CASE("crc32 check value") {
    CHECK(io::crc32(as_bytes("123456789")) == 0xCBF43926u);
    CHECK(io::crc32({}) == 0u);
}

TEST_CASE("sha256 known vectors") {
    CHECK(hex(io::sha256(as_bytes(""))) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(hex(io::sha256(as_bytes("abc"))) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(hex(io::sha256(as_bytes("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"))) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("byte writer/reader round trip") {
    io::ByteWriter w;
    w.u8(0xAB);
    w.u32(123456u);
    w.u64(0xDEADBEEFCAFEull);
    w.i64(-42);
    w.f64(3.14159);
    w.str("hello");

    io::ByteReader r(w.bytes());
    CHECK(r.u8() == 0xAB);
    CHECK(r.u32() == 123456u);
    CHECK(r.u64() == 0xDEADBEEFCAFEull);
    CHECK(r.i64() == -42);
    CHECK(r.f64() == 3.14159);
    CHECK(r.str() == "hello");
    CHECK(r.exhausted());
    CHECK_THROWS_AS(r.u8(), IoError);
}

TEST_CASE("atomic write and read back") {
    corpus::TempDir tmp;
    const auto path = tmp.file("blob.bin");
    std::vector<std::uint8_t> data{1, 2, 3, 250, 255};
    io::atomic_write_file(path, data);
    CHECK(io::read_file(path) == data);
    CHECK_FALSE(std::filesystem::exists(tmp.file("blob.bin.tmp")));
    CHECK_THROWS_AS(io::read_file(tmp.file("missing.bin")), IoError);
}
