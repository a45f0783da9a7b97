#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "prband/manifest.hpp"
#include "prband/sha256.hpp"

using namespace prband;
namespace fs = std::filesystem;

TEST_CASE("sha256 matches the reference vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    const std::string million(1000000, 'a');
    CHECK(sha256_hex(million) ==
          "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");

    // Incremental updates agree with one-shot hashing.
    Sha256 h;
    h.update("abc");
    h.update("dbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq");
    CHECK(h.hex() == "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256_file hashes file contents") {
    const auto dir = fs::temp_directory_path() / "prband_manifest_tests";
    fs::create_directories(dir);
    const auto path = dir / "payload.bin";
    std::ofstream(path, std::ios::binary) << "abc";
    CHECK(sha256_file(path) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK_THROWS_AS(sha256_file(dir / "nope.bin"), std::runtime_error);
}

TEST_CASE("manifest round-trips and filters deterministic hashes") {
    RunManifest m;
    m.config_hash = "deadbeef";
    m.base_seed = 42;
    m.artifacts["data/ring_full.csv"] = {"hash1", "dataset", true};
    m.artifacts["logs/C1/m00.train.jsonl"] = {"hash2", "C1/train", false};
    m.member_seeds["C1/m00/train"] = 7;
    m.stage_wall_ms["C1/train"] = 123.5;
    m.failed_members.push_back({"C2", 3, "boom"});

    const auto dir = fs::temp_directory_path() / "prband_manifest_tests";
    fs::create_directories(dir);
    save_manifest(m, dir / "manifest.json");
    const auto back = load_manifest(dir / "manifest.json");

    CHECK(back.config_hash == "deadbeef");
    CHECK(back.base_seed == 42);
    CHECK(back.artifacts.size() == 2);
    CHECK(back.artifacts.at("data/ring_full.csv").sha256 == "hash1");
    CHECK(back.artifacts.at("logs/C1/m00.train.jsonl").deterministic == false);
    CHECK(back.member_seeds.at("C1/m00/train") == 7);
    CHECK(back.failed_members.size() == 1);
    CHECK(back.failed_members[0].group == "C2");

    const auto det = back.deterministic_hashes();
    CHECK(det.size() == 1);
    CHECK(det.count("data/ring_full.csv") == 1);
}

TEST_CASE("verify_manifest reports missing and mismatched artifacts") {
    const auto dir = fs::temp_directory_path() / "prband_verify_tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "good.txt") << "abc";
    std::ofstream(dir / "tampered.txt") << "abc";

    RunManifest m;
    m.artifacts["good.txt"] = {sha256_file(dir / "good.txt"), "s", true};
    m.artifacts["tampered.txt"] = {sha256_file(dir / "tampered.txt"), "s", true};
    m.artifacts["gone.txt"] = {"0000", "s", true};

    std::ofstream(dir / "tampered.txt") << "abcd";
    const auto result = verify_manifest(m, dir);
    CHECK_FALSE(result.ok());
    CHECK(result.missing == std::vector<std::string>{"gone.txt"});
    CHECK(result.mismatched == std::vector<std::string>{"tampered.txt"});
    CHECK(result.checked == 2);

    RunManifest clean;
    clean.artifacts["good.txt"] = {sha256_file(dir / "good.txt"), "s", true};
    CHECK(verify_manifest(clean, dir).ok());
}
