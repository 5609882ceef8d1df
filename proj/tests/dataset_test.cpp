#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "synoptic/dataset.hpp"

using namespace synoptic;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

struct temp_dir {
  fs::path path;
  explicit temp_dir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~temp_dir() { fs::remove_all(path); }
};

}  // namespace

TEST(TensorIo, RoundTrip) {
  temp_dir dir("synoptic_tensor_io");
  Tensor t({2, 3, 4});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i) * 0.5f;
  const std::string path = (dir.path / "t.bin").string();
  save_tensor(t, path);
  Tensor back = load_tensor(path);
  EXPECT_EQ(back.shape, t.shape);
  EXPECT_EQ(back.data, t.data);
}

TEST(TensorIo, ChecksumCatchesCorruption) {
  temp_dir dir("synoptic_tensor_bad");
  Tensor t({4});
  const std::string path = (dir.path / "t.bin").string();
  save_tensor(t, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(13);
    char b = 0x7F;
    f.write(&b, 1);
  }
  EXPECT_THROW(load_tensor(path), io_error);
}

TEST(SyntheticDataset, CountsAndSplit) {
  temp_dir dir("synoptic_ds_counts");
  dataset_manifest m =
      prepare_synthetic_dataset(dir.path.string(), 4, 20, 3000, 16, 16, 7);
  EXPECT_EQ(m.train.size() + m.test.size(), 80u);
  EXPECT_EQ(m.train.size(), 64u);
  EXPECT_EQ(m.test.size(), 16u);
  EXPECT_EQ(m.num_classes, 4u);

  dataset ds = load_dataset(dir.path.string());
  EXPECT_EQ(ds.train.size(), 64u);
  EXPECT_EQ(ds.test.size(), 16u);
  for (const data_sample& s : ds.test) {
    EXPECT_EQ(s.frame.events.size(), 3000u);
    EXPECT_DOUBLE_EQ(s.frame.frame.sum64(), 3000.0);
  }
}

TEST(SyntheticDataset, RerunIsByteIdentical) {
  temp_dir a("synoptic_ds_rerun_a");
  temp_dir b("synoptic_ds_rerun_b");
  prepare_synthetic_dataset(a.path.string(), 2, 5, 3000, 16, 16, 3);
  prepare_synthetic_dataset(b.path.string(), 2, 5, 3000, 16, 16, 3);
  EXPECT_EQ(read_file(a.path / "manifest.json"), read_file(b.path / "manifest.json"));
  EXPECT_EQ(read_file(a.path / "0" / "0000.bin"), read_file(b.path / "0" / "0000.bin"));
  EXPECT_EQ(read_file(a.path / "1" / "0004.bin"), read_file(b.path / "1" / "0004.bin"));
}

TEST(SyntheticDataset, SeedChangesContent) {
  temp_dir a("synoptic_ds_seed_a");
  temp_dir b("synoptic_ds_seed_b");
  prepare_synthetic_dataset(a.path.string(), 2, 3, 3000, 16, 16, 1);
  prepare_synthetic_dataset(b.path.string(), 2, 3, 3000, 16, 16, 2);
  EXPECT_NE(read_file(a.path / "0" / "0000.bin"), read_file(b.path / "0" / "0000.bin"));
}

TEST(ImportDataset, RoundTripsRecordedStreams) {
  temp_dir input("synoptic_import_in");
  temp_dir out("synoptic_import_out");
  for (size_t cls = 0; cls < 2; ++cls) {
    fs::create_directories(input.path / std::to_string(cls));
    event_stream s = synth_events(cls, 40 + cls, 6500);
    save_events(s, (input.path / std::to_string(cls) / "rec.bin").string());
  }
  dataset_manifest m = import_events_dataset(input.path.string(), out.path.string(), 5);
  // 6500 events -> 2 frames per stream, remainder dropped
  EXPECT_EQ(m.train.size() + m.test.size(), 4u);
  dataset ds = load_dataset(out.path.string());
  for (const data_sample& s : ds.train) EXPECT_EQ(s.frame.events.size(), 3000u);
}

TEST(ImportDataset, CorruptFileIsLocatedError) {
  temp_dir input("synoptic_import_bad");
  fs::create_directories(input.path / "0");
  {
    std::ofstream f(input.path / "0" / "broken.bin", std::ios::binary);
    f << "garbage";
  }
  temp_dir out("synoptic_import_bad_out");
  try {
    import_events_dataset(input.path.string(), out.path.string(), 5);
    FAIL() << "corrupt input must be rejected";
  } catch (const io_error& e) {
    EXPECT_NE(std::string(e.what()).find("broken.bin"), std::string::npos);
  }
}

TEST(Manifest, MissingManifestIsIoError) {
  temp_dir dir("synoptic_ds_missing");
  EXPECT_THROW(load_dataset(dir.path.string()), io_error);
}

TEST(ImportDataset, ImageTensorsRoundTrip) {
  temp_dir input("synoptic_import_img_in");
  temp_dir out("synoptic_import_img_out");
  rng_stream rng(3);
  for (size_t cls = 0; cls < 2; ++cls) {
    fs::create_directories(input.path / std::to_string(cls));
    for (int i = 0; i < 3; ++i) {
      Tensor img({1, 8, 8});
      for (float& v : img.data) v = static_cast<float>(rng.uniform(0, 255));
      save_tensor(img, (input.path / std::to_string(cls) /
                        ("img" + std::to_string(i) + ".bin"))
                           .string());
    }
  }
  dataset_manifest m = import_images_dataset(input.path.string(), out.path.string(), 9);
  EXPECT_EQ(m.kind, "images");
  EXPECT_EQ(m.train.size() + m.test.size(), 6u);
  dataset ds = load_dataset(out.path.string());
  EXPECT_EQ(ds.kind, "images");
  EXPECT_EQ(ds.width, 8);
  for (const data_sample& s : ds.train) {
    EXPECT_TRUE(s.frame.events.empty());
    EXPECT_EQ(s.frame.frame.shape, (std::vector<int64_t>{1, 8, 8}));
  }
}

TEST(ImportDataset, MixedImageSizesRejected) {
  temp_dir input("synoptic_import_img_mixed");
  temp_dir out("synoptic_import_img_mixed_out");
  fs::create_directories(input.path / "0");
  save_tensor(Tensor({1, 8, 8}), (input.path / "0" / "a.bin").string());
  save_tensor(Tensor({1, 6, 6}), (input.path / "0" / "b.bin").string());
  EXPECT_THROW(import_images_dataset(input.path.string(), out.path.string(), 1),
               io_error);
}
