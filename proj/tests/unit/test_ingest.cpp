// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <filesystem>

#include "oracles.hpp"

using namespace mavfi;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mavfi_ingest_" + std::to_string(Rng(reinterpret_cast<std::uintptr_t>(this)).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DataConfig small_data() {
  DataConfig dc;
  dc.width = 24;
  dc.height = 20;
  dc.min_size = 4;
  dc.max_size = 8;
  return dc;
}

}  // namespace

TEST_CASE("well-formed folders load and bad ones are reported") {
  TempDir tmp;
  const auto ds = make_dataset<float>(5, 3, small_data());
  for (const auto& tr : ds) write_triplet_folder(tr, tmp.path / tr.name);
  io::write_image(ds[0].i0, tmp.path / "broken" / "a.png");
  io::write_image(ds[0].i1, tmp.path / "broken" / "b.png");
  io::atomic_write(tmp.path / "manifest.json", "{}");

  const auto res = ingest_triplet_dir(tmp.path);
  REQUIRE(res.triplets.size() == 3);
  REQUIRE(res.issues.size() == 1);
  CHECK(res.issues[0].sample == "broken");
  CHECK_THAT(res.issues[0].message, ContainsSubstring("expected 3 images, found 2"));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& got = res.triplets[i];
    CHECK(got.name == ds[i].name);
    CHECK(got.has_flows());
    CHECK(got.gt_to0.tensor() == ds[i].gt_to0.tensor());
    CHECK(oracle::max_abs_diff(got.it.tensor(), ds[i].it.tensor()) <= 0.5 / 255 + 1e-7);
  }
}

TEST_CASE("folders without flow files load without flows") {
  TempDir tmp;
  auto tr = make_dataset<float>(6, 1, small_data())[0];
  tr.gt_to0 = {};
  tr.gt_to1 = {};
  write_triplet_folder(tr, tmp.path / "s");
  const auto res = ingest_triplet_dir(tmp.path);
  REQUIRE(res.triplets.size() == 1);
  CHECK_FALSE(res.triplets[0].has_flows());
}

TEST_CASE("inconsistent folders are rejected with a reason") {
  TempDir tmp;
  const auto tr = make_dataset<float>(7, 1, small_data())[0];

  write_triplet_folder(tr, tmp.path / "a_sizes");
  io::write_image(Frame<float>(10, 10), tmp.path / "a_sizes" / "im2.png");

  write_triplet_folder(tr, tmp.path / "b_unpaired");
  fs::remove(tmp.path / "b_unpaired" / kFlowToEnd);

  write_triplet_folder(tr, tmp.path / "c_flowsize");
  io::write_flo(FlowField<float>(5, 5), tmp.path / "c_flowsize" / kFlowToEnd);

  const auto res = ingest_triplet_dir(tmp.path);
  CHECK(res.triplets.empty());
  REQUIRE(res.issues.size() == 3);
  CHECK_THAT(res.issues[0].message, ContainsSubstring("sizes differ"));
  CHECK_THAT(res.issues[1].message, ContainsSubstring("pairs"));
  CHECK_THAT(res.issues[2].message, ContainsSubstring("does not match image size"));
}

TEST_CASE("missing dataset directory is a format error") {
  CHECK_THROWS_AS(ingest_triplet_dir("/nonexistent/dataset"), FormatError);
}
