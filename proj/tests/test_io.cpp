#include <catch2/catch_amalgamated.hpp>

#include "forge/errors.hpp"
#include "forge/io.hpp"
#include "helpers.hpp"

using namespace forge;
using forge::test::TempDir;

TEST_CASE("sha256_hex matches the published test vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    // Multi-block input (> 64 bytes) exercises the block loop.
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256_file hashes file bytes") {
    TempDir tmp;
    const auto f = tmp / "x.bin";
    write_text_file(f, "abc");
    CHECK(sha256_file(f) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK_THROWS_AS(sha256_file(tmp / "missing.bin"), DataError);
}

TEST_CASE("text file round-trip preserves bytes") {
    TempDir tmp;
    const auto f = tmp / "t.txt";
    const std::string payload = "line one\nline two\n\ttabbed";
    write_text_file(f, payload);
    CHECK(read_text_file(f) == payload);
    CHECK_THROWS_AS(read_text_file(tmp / "absent.txt"), DataError);
}

TEST_CASE("json file round-trip") {
    TempDir tmp;
    const auto f = tmp / "v.json";
    const Json value = {{"k", 1}, {"nested", {{"a", true}}}, {"arr", {1, 2, 3}}};
    write_json_file(f, value);
    CHECK(read_json_file(f) == value);
}

TEST_CASE("read_json_file reports parse failures as DataError") {
    TempDir tmp;
    const auto f = tmp / "bad.json";
    write_text_file(f, "{not json");
    CHECK_THROWS_AS(read_json_file(f), DataError);
}

TEST_CASE("jsonl round-trip keeps row order and ends with a newline") {
    TempDir tmp;
    const auto f = tmp / "rows.jsonl";
    const std::vector<Json> rows = {Json{{"i", 0}}, Json{{"i", 1}}, Json{{"i", 2}}};
    write_jsonl(f, rows);
    CHECK(read_jsonl(f) == rows);

    const std::string raw = read_text_file(f);
    REQUIRE_FALSE(raw.empty());
    CHECK(raw.back() == '\n');
    // One compact value per line: no pretty-printing sneaking in.
    CHECK(raw.find("  ") == std::string::npos);
}

TEST_CASE("read_jsonl names the offending line on parse errors") {
    TempDir tmp;
    const auto f = tmp / "broken.jsonl";
    write_text_file(f, "{\"ok\": 1}\nnot json at all\n");
    try {
        read_jsonl(f);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("empty jsonl file reads as an empty vector") {
    TempDir tmp;
    const auto f = tmp / "empty.jsonl";
    write_text_file(f, "");
    CHECK(read_jsonl(f).empty());
}
