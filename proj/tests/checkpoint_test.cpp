#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nca/checkpoint.hpp"

using namespace nca;
namespace fs = std::filesystem;

TEST_CASE("checkpoints round-trip parameters, layout and config") {
  Rng rng(1);
  Checkpoint ckpt;
  ckpt.params = RuleParams<float>::init(rng);
  ckpt.step_config = {0.5, 0.02};
  ckpt.layout = IoLayout::standard();
  ckpt.scaling = ObsScaling{};

  fs::path path = fs::temp_directory_path() / "nca_ckpt_test.nca";
  save_checkpoint(path.string(), ckpt);
  Checkpoint back = load_checkpoint(path.string());

  CHECK(back.params.raw == ckpt.params.raw);
  CHECK(back.params.raw.size() == 1854);
  CHECK(back.step_config.fire_rate == 0.5);
  CHECK(back.step_config.noise_amp == 0.02);
  CHECK(back.layout.inputs.size() == 8);
  CHECK(back.layout.outputs[0] == GridPos{16, 14});
  CHECK(back.layout.outputs[1] == GridPos{16, 18});
  for (size_t i = 0; i < 8; ++i) {
    CHECK(back.layout.inputs[i].pos == ckpt.layout.inputs[i].pos);
    CHECK(back.layout.inputs[i].obs == ckpt.layout.inputs[i].obs);
  }
  for (int k = 0; k < 4; ++k)
    CHECK(back.scaling.factor[k] == doctest::Approx(ckpt.scaling.factor[k]));
}

TEST_CASE("saving twice produces byte-identical files") {
  Rng rng(2);
  Checkpoint ckpt;
  ckpt.params = RuleParams<float>::init(rng);
  ckpt.layout = IoLayout::standard();

  fs::path a = fs::temp_directory_path() / "nca_ckpt_a.nca";
  fs::path b = fs::temp_directory_path() / "nca_ckpt_b.nca";
  save_checkpoint(a.string(), ckpt);
  save_checkpoint(b.string(), ckpt);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), {});
  std::string sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK(sa.size() > 1854 * sizeof(float));
}

TEST_CASE("a checkpoint with the wrong parameter count is rejected") {
  Rng rng(3);
  Checkpoint ckpt;
  ckpt.params = RuleParams<float>::init(rng);
  ckpt.layout = IoLayout::standard();
  fs::path path = fs::temp_directory_path() / "nca_ckpt_bad.nca";
  save_checkpoint(path.string(), ckpt);

  // Corrupt the declared count in the header.
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto pos = content.find("1854");
  REQUIRE(pos != std::string::npos);
  content.replace(pos, 4, "1853");
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();

  CHECK_THROWS(load_checkpoint(path.string()));
}

TEST_CASE("loading a missing checkpoint reports the path") {
  try {
    load_checkpoint("/nonexistent/dir/model.nca");
    FAIL("expected a throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/model.nca") !=
          std::string::npos);
  }
}

TEST_CASE("a truncated checkpoint is rejected") {
  Rng rng(4);
  Checkpoint ckpt;
  ckpt.params = RuleParams<float>::init(rng);
  ckpt.layout = IoLayout::standard();
  fs::path path = fs::temp_directory_path() / "nca_ckpt_trunc.nca";
  save_checkpoint(path.string(), ckpt);
  fs::resize_file(path, fs::file_size(path) - 100);
  CHECK_THROWS(load_checkpoint(path.string()));
}
