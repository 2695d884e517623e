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
    path = fs::temp_directory_path() / ("mavfi_io_" + std::to_string(Rng(reinterpret_cast<std::uintptr_t>(this)).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.width_multiplier = 1.0 / 16;
  mc.depth = 2;
  return mc;
}

void truncate_file(const fs::path& p, std::size_t drop) {
  const std::string bytes = io::read_file(p);
  io::atomic_write(p, std::string_view(bytes).substr(0, bytes.size() - drop));
}

}  // namespace

TEST_CASE("images round-trip at 8-bit precision") {
  TempDir tmp;
  Rng rng(1);
  const auto f = oracle::random_frame<float>(13, 17, rng);
  for (const char* name : {"a.png", "a.ppm"}) {
    io::write_image(f, tmp.path / name);
    const auto g = io::read_image(tmp.path / name);
    REQUIRE(g.height() == 13);
    REQUIRE(g.width() == 17);
    CHECK(oracle::max_abs_diff(f.tensor(), g.tensor()) <= 0.5 / 255 + 1e-7);
  }
  // Values on the 8-bit grid survive exactly.
  Frame<float> q(4, 5);
  for (std::size_t i = 0; i < q.tensor().size(); ++i) q.tensor()[i] = static_cast<float>((i * 37) % 256) / 255.0f;
  io::write_image(q, tmp.path / "q.png");
  CHECK(io::read_image(tmp.path / "q.png") == q);
}

TEST_CASE("image reader rejects garbage") {
  TempDir tmp;
  io::atomic_write(tmp.path / "x.png", "definitely not an image");
  CHECK_THROWS_AS(io::read_image(tmp.path / "x.png"), FormatError);
  io::atomic_write(tmp.path / "t.ppm", "P6\n4 4\n255\nabc");
  CHECK_THROWS_WITH(io::read_image(tmp.path / "t.ppm"), ContainsSubstring("truncated"));
  CHECK_THROWS_AS(io::read_image(tmp.path / "missing.png"), FormatError);
}

TEST_CASE("flow files round-trip exactly") {
  TempDir tmp;
  Rng rng(2);
  const FlowField<float> f(oracle::random_tensor<float>({2, 7, 11}, rng, -30, 30));
  io::write_flo(f, tmp.path / "f.flo");
  CHECK(fs::file_size(tmp.path / "f.flo") == 12 + 8 * 7 * 11);
  CHECK(io::read_flo(tmp.path / "f.flo").tensor() == f.tensor());
}

TEST_CASE("corrupt flow files are rejected") {
  TempDir tmp;
  const FlowField<float> f(3, 4, 1.0f, 2.0f);
  io::write_flo(f, tmp.path / "f.flo");
  truncate_file(tmp.path / "f.flo", 5);
  CHECK_THROWS_WITH(io::read_flo(tmp.path / "f.flo"), ContainsSubstring("corrupt flow file"));
  std::string bad = io::encode_flo(f);
  bad[0] = 'X';
  CHECK_THROWS_WITH(io::decode_flo(bad, "mem"), ContainsSubstring("sanity tag"));
  CHECK_THROWS_AS(io::decode_flo("short", "mem"), FormatError);
}

TEST_CASE("checkpoints round-trip parameters and metadata") {
  TempDir tmp;
  const auto mc = tiny_model();
  const auto params = init_params<float>(mc, 5);
  checkpoint_save(params, mc, tmp.path / "c.mavfi", 42);
  const auto ck = io::read_checkpoint<float>(tmp.path / "c.mavfi");
  CHECK(ck.step == 42);
  CHECK(ck.fingerprint == fingerprint(mc));
  CHECK(checkpoint_model_config(ck).depth == 2);
  CHECK(restore_params(ck, mc) == params);

  const auto pd = params.cast<double>();
  checkpoint_save(pd, mc, tmp.path / "d.mavfi");
  CHECK(restore_params(io::read_checkpoint<double>(tmp.path / "d.mavfi"), mc) == pd);
  CHECK_THROWS_WITH(io::read_checkpoint<float>(tmp.path / "d.mavfi"), ContainsSubstring("f64"));

  std::size_t leftovers = 0;
  for (const auto& e : fs::directory_iterator(tmp.path))
    if (e.path().string().find(".tmp") != std::string::npos) ++leftovers;
  CHECK(leftovers == 0);
}

TEST_CASE("truncated or mangled checkpoints are rejected") {
  TempDir tmp;
  const auto mc = tiny_model();
  checkpoint_save(init_params<float>(mc, 5), mc, tmp.path / "c.mavfi");
  const std::string bytes = io::read_file(tmp.path / "c.mavfi");
  CHECK_THROWS_WITH(io::decode_checkpoint<float>(bytes.substr(0, bytes.size() - 3), "c"), ContainsSubstring("corrupt"));
  CHECK_THROWS_AS(io::decode_checkpoint<float>(bytes.substr(0, 40), "c"), FormatError);
  CHECK_THROWS_WITH(io::decode_checkpoint<float>("hello\n", "c"), ContainsSubstring("not a checkpoint"));
  std::string v2 = bytes;
  v2.replace(v2.find("version 1"), 9, "version 2");
  CHECK_THROWS_WITH(io::decode_checkpoint<float>(v2, "c"), ContainsSubstring("unsupported checkpoint version"));
}

TEST_CASE("restoring into a different model names the offending array") {
  const auto mc = tiny_model();
  auto ck = make_checkpoint<float>(init_params<float>(mc, 5), nullptr, 0, mc);
  ModelConfig wider = mc;
  wider.width_multiplier = 1.0 / 8;
  CHECK_THROWS_WITH(restore_params(ck, wider), ContainsSubstring("shape mismatch for array"));
  ModelConfig deeper = mc;
  deeper.depth = 3;
  CHECK_THROWS_WITH(restore_params(ck, deeper), ContainsSubstring("missing array"));
  ck.arrays.emplace_back("stray.weight", Tensor<float>(Shape{1}));
  CHECK_THROWS_WITH(restore_params(ck, mc), ContainsSubstring("unexpected array 'stray.weight'"));
}

TEST_CASE("fingerprint mismatch is refused even when shapes agree") {
  const auto mc = tiny_model();
  const auto ck = make_checkpoint<float>(init_params<float>(mc, 5), nullptr, 0, mc);
  ModelConfig other = mc;
  other.use_flow_residual = false;
  REQUIRE(parameter_count(other) == parameter_count(mc));
  CHECK_THROWS_WITH(restore_params(ck, other), ContainsSubstring("fingerprint"));
}

TEST_CASE("optimizer state survives a checkpoint") {
  TempDir tmp;
  const auto mc = tiny_model();
  TrainState<float> st;
  st.params = init_params<float>(mc, 5);
  st.optim = AdamW<float>(st.params, 1e-4);
  for (auto& e : st.params.entries()) e.var.grad() = Tensor<float>(e.var.value().shape(), 0.5f);
  st.optim.step(st.params, 1e-3);
  st.step = 1;
  checkpoint_save(st, mc, tmp.path / "s.mavfi");
  const auto back = restore_state(io::read_checkpoint<float>(tmp.path / "s.mavfi"), mc, 1e-4);
  CHECK(back.step == 1);
  CHECK(back.optim.updates() == 1);
  CHECK(back.params == st.params);
  CHECK(back.optim.first_moments() == st.optim.first_moments());
  CHECK(back.optim.second_moments() == st.optim.second_moments());
  CHECK_THROWS_WITH(restore_state(make_checkpoint<float>(st.params, nullptr, 1, mc), mc, 1e-4),
                    ContainsSubstring("optimizer state"));
}
