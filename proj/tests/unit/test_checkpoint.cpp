#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "capsnews/checkpoint.hpp"
#include "capsnews/errors.hpp"
#include "support/support.hpp"

using namespace capsnews;
using capsnews::testing::TempDir;

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip keeps names, shapes and bits") {
    TempDir dir("ckpt");
    const std::vector<NamedArray> entries{
        {"embedding.trainable", {3, 2}, {0.1, -0.2, 1e-300, 3.0, -0.0, 7.25}},
        {"capsule.b0.conv.bias", {4}, {1, 2, 3, 4}},
    };
    save_checkpoint(dir / "a.ckpt", entries);
    const auto loaded = load_checkpoint(dir / "a.ckpt");
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(loaded[i].name == entries[i].name);
      CHECK(loaded[i].shape == entries[i].shape);
      CHECK(loaded[i].values == entries[i].values);
    }
  }

  TEST_CASE("header layout is little-endian magic, version, count") {
    TempDir dir("ckpt");
    save_checkpoint(dir / "h.ckpt", {{"x", {1}, {2.0}}});
    const auto bytes = capsnews::testing::read_text(dir / "h.ckpt");
    REQUIRE(bytes.size() == 8 + 4 + 4 + 4 + 1 + 4 + 8 + 8);
    CHECK(bytes.substr(0, 8) == "CAPSCKPT");
    CHECK(static_cast<unsigned char>(bytes[8]) == kCheckpointVersion);
    CHECK(static_cast<unsigned char>(bytes[12]) == 1);
  }

  TEST_CASE("unsupported version is an incompatibility") {
    TempDir dir("ckpt");
    save_checkpoint(dir / "v.ckpt", {{"x", {1}, {2.0}}});
    std::fstream f(dir / "v.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put(char(99));
    f.close();
    CHECK_THROWS_AS(load_checkpoint(dir / "v.ckpt"), IncompatibleError);
  }

  TEST_CASE("truncated or foreign files are rejected") {
    TempDir dir("ckpt");
    save_checkpoint(dir / "t.ckpt", {{"x", {2, 2}, {1, 2, 3, 4}}});
    std::filesystem::resize_file(dir / "t.ckpt", std::filesystem::file_size(dir / "t.ckpt") - 5);
    CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), IoError);
    capsnews::testing::write_text(dir / "junk.ckpt", "not a checkpoint at all");
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  }

  TEST_CASE("inconsistent entry is refused on save") {
    TempDir dir("ckpt");
    CHECK_THROWS_AS(save_checkpoint(dir / "bad.ckpt", {{"x", {3}, {1, 2}}}), DimensionError);
  }
}
