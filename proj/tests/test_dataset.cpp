#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "cbm/dataset.hpp"
#include "cbm/image_io.hpp"
#include "test_support.hpp"

namespace cbm {
namespace {

namespace fs = std::filesystem;

fs::path make_image_tree(const std::string& name, std::size_t per_class, std::size_t size) {
  const auto root = testing::scratch_dir(name);
  for (const char* cls : {"cats", "dogs"}) {
    fs::create_directories(root / cls);
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto img = testing::random_image(size, size, 1, i * 31 + (cls[0] == 'c' ? 1 : 2));
      write_png(root / cls / ("img" + std::to_string(i) + ".png"), img);
    }
  }
  return root;
}

ScheduleVector constant_schedule(double r, std::size_t n) {
  return build_schedule(ScheduleSpec{ScheduleKind::Constant, r, n, 1});
}

TEST(ImageIo, PngAndPnmRoundTrip) {
  const auto dir = testing::scratch_dir("io");
  for (std::size_t c : {1u, 3u}) {
    const auto img = testing::random_image(6, 9, c, c);
    write_png(dir / "a.png", img);
    EXPECT_EQ(read_image(dir / "a.png"), img);
    write_pnm(dir / (c == 1 ? "a.pgm" : "a.ppm"), img);
    EXPECT_EQ(read_image(dir / (c == 1 ? "a.pgm" : "a.ppm")), img);
  }
  EXPECT_THROW(read_image(dir / "missing.png"), Error);
}

TEST(ImageIo, NearestResize) {
  Image img(2, 2, 1, std::vector<float>{1, 2, 3, 4});
  const auto up = resize_nearest(img, 4, 4);
  EXPECT_EQ(up.pixels(), (std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Ingest, CountsItemsAndProfiles) {
  const auto root = make_image_tree("ingest", 5, 16);
  IngestStats stats;
  const auto m = ingest(root, Geometry{16, 16, 1}, PatchGrid{4, 4}, {}, &stats);
  EXPECT_EQ(m.items.size(), 10u);
  EXPECT_EQ(m.classes, (std::vector<std::string>{"cats", "dogs"}));
  EXPECT_EQ(stats.computed, 10u);
  EXPECT_TRUE(stats.cache_written);
  for (const auto& item : m.items) {
    EXPECT_EQ(item.profile.size(), 16u);
    EXPECT_EQ(item.profile, salience_profile(item.image, PatchGrid{4, 4}));
  }
  // Each class keeps train items.
  for (int label : {0, 1}) {
    EXPECT_TRUE(std::any_of(m.items.begin(), m.items.end(), [&](const DatasetItem& it) {
      return it.label == label && it.split == Split::Train;
    }));
  }
  EXPECT_EQ(m.indices(Split::Val).size(), 2u);  // floor(0.2 * 5) per class
}

TEST(Ingest, SecondRunHitsCache) {
  const auto root = make_image_tree("ingest_cache", 3, 16);
  ingest(root, Geometry{16, 16, 1}, PatchGrid{4, 4});
  IngestStats stats;
  const auto m = ingest(root, Geometry{16, 16, 1}, PatchGrid{4, 4}, {}, &stats);
  EXPECT_EQ(stats.cache_hits, 6u);
  EXPECT_EQ(stats.computed, 0u);
  EXPECT_FALSE(stats.cache_written);
  EXPECT_EQ(verify_profiles(m, m.items.size()), 0u);

  // A new grid changes every key.
  IngestStats regrid;
  ingest(root, Geometry{16, 16, 1}, PatchGrid{2, 2}, {}, &regrid);
  EXPECT_EQ(regrid.cache_hits, 0u);
  EXPECT_EQ(regrid.computed, 6u);
}

TEST(Ingest, CacheFileLayout) {
  const auto root = make_image_tree("ingest_layout", 1, 8);
  const auto m = ingest(root, Geometry{8, 8, 1}, PatchGrid{2, 2});
  const auto bytes = read_file(root / kCacheFileName);
  ASSERT_EQ(bytes.substr(0, 5), "CBMS1");
  EXPECT_EQ(bytes.size(), 5u + 2 * (8 + 4 + 2 * 4 * 8));
  const auto decoded = decode_cache(bytes);
  EXPECT_EQ(decoded.size(), 2u);
  for (const auto& item : m.items) {
    const auto hash = content_hash(item.image, PatchGrid{2, 2}, GradientOperator::Central);
    ASSERT_TRUE(decoded.count(hash));
    EXPECT_EQ(decoded.at(hash), item.profile);
  }
  // n is stored little-endian right after the first hash.
  EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 4u);
  EXPECT_EQ(bytes[14], 0);
}

TEST(Ingest, CorruptCacheIsRebuilt) {
  const auto root = make_image_tree("ingest_corrupt", 2, 8);
  std::ofstream(root / kCacheFileName, std::ios::binary) << "garbage";
  IngestStats stats;
  const auto m = ingest(root, Geometry{8, 8, 1}, PatchGrid{2, 2}, {}, &stats);
  EXPECT_EQ(stats.computed, 4u);
  EXPECT_EQ(verify_profiles(m, 4), 0u);
}

TEST(Ingest, NonDivisibleGridFailsBeforeDecoding) {
  const auto root = make_image_tree("ingest_grid", 2, 16);
  try {
    ingest(root, Geometry{16, 16, 1}, PatchGrid{3, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidGrid);
  }
  EXPECT_FALSE(fs::exists(root / kCacheFileName));
}

TEST(Ingest, SkipsUnreadableFiles) {
  const auto root = make_image_tree("ingest_skip", 3, 16);
  std::ofstream(root / "cats" / "broken.png") << "not a png";
  const auto m = ingest(root, Geometry{16, 16, 1}, PatchGrid{4, 4});
  EXPECT_EQ(m.skipped, 1u);
  EXPECT_EQ(m.items.size(), 6u);
}

TEST(Ingest, ResizesAndConvertsToGeometry) {
  const auto root = testing::scratch_dir("ingest_resize");
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  write_png(root / "a" / "x.png", testing::random_image(20, 12, 3, 1));
  write_pnm(root / "b" / "y.pgm", testing::random_image(7, 7, 1, 2));
  const auto m = ingest(root, Geometry{32, 32, 1}, PatchGrid{4, 4});
  ASSERT_EQ(m.items.size(), 2u);
  for (const auto& item : m.items) {
    EXPECT_EQ(item.image.height(), 32u);
    EXPECT_EQ(item.image.width(), 32u);
    EXPECT_EQ(item.image.channels(), 1u);
    EXPECT_EQ(item.profile.size(), 16u);
  }
  EXPECT_EQ(PatchGrid({4, 4}).patch_height(32), 8u);
}

TEST(Synthetic, BalancedAndDeterministic) {
  const SyntheticSpec spec{"two-shapes", 200, 100, 1};
  const auto a = make_synthetic(spec, PatchGrid{4, 4});
  const auto b = make_synthetic(spec, PatchGrid{4, 4});
  ASSERT_EQ(a.items.size(), 300u);
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    const auto& it = a.items[i];
    ++counts[it.split == Split::Train ? 0 : 1][it.label];
    EXPECT_EQ(it.image, b.items[i].image);
  }
  EXPECT_EQ(counts[0][0], 100u);
  EXPECT_EQ(counts[0][1], 100u);
  EXPECT_EQ(counts[1][0], 50u);
  EXPECT_EQ(counts[1][1], 50u);
  EXPECT_NE(make_synthetic({"two-shapes", 4, 0, 2}, PatchGrid{4, 4}).items[0].image, a.items[0].image);
  EXPECT_THROW(make_synthetic({"three-shapes", 4, 0, 1}, PatchGrid{4, 4}), Error);
}

TEST(Synthetic, DiskBoundaryPatchIsMostSalient) {
  const auto m = make_synthetic({"two-shapes", 20, 0, 5}, PatchGrid{4, 4});
  std::size_t checked = 0;
  for (const auto& item : m.items) {
    if (item.label != 0) continue;
    const auto oracle = testing::oracle_salience(item.image, 4, 4);
    const auto best = static_cast<std::size_t>(
        std::max_element(oracle.p.begin(), oracle.p.end()) - oracle.p.begin());
    EXPECT_EQ(best, static_cast<std::size_t>(std::max_element(item.profile.probabilities.begin(),
                                                               item.profile.probabilities.end()) -
                                              item.profile.probabilities.begin()));
    // The winning patch contains a pixel on the disk edge (shape/background transition).
    bool has_edge = false;
    const auto inside = [&](long y, long x) {
      if (y < 0 || x < 0 || y >= 16 || x >= 16) return false;
      return item.image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) >= 140.0f;
    };
    for (long y = static_cast<long>(best / 4) * 4; y < static_cast<long>(best / 4) * 4 + 4; ++y) {
      for (long x = static_cast<long>(best % 4) * 4; x < static_cast<long>(best % 4) * 4 + 4; ++x) {
        const bool here = inside(y, x);
        if (here != inside(y + 1, x) || here != inside(y - 1, x) || here != inside(y, x + 1) ||
            here != inside(y, x - 1)) {
          has_edge = true;
        }
      }
    }
    EXPECT_TRUE(has_edge) << "item " << item.id;
    ++checked;
  }
  EXPECT_EQ(checked, 10u);
}

TEST(EpochBatches, SizesKeepPartialBatch) {
  const auto m = make_synthetic({"two-shapes", 10, 4, 1}, PatchGrid{4, 4});
  const auto batches = epoch_batches(m, constant_schedule(0.5, 3), 2, 4, 9);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].rows, 4u);
  EXPECT_EQ(batches[1].rows, 4u);
  EXPECT_EQ(batches[2].rows, 2u);
  EXPECT_EQ(batches[2].inputs.size(), 2u * 256u);
}

TEST(EpochBatches, ZeroRatioYieldsUnmaskedData) {
  const auto m = make_synthetic({"two-shapes", 12, 0, 1}, PatchGrid{4, 4});
  const auto linear = build_schedule(ScheduleSpec{ScheduleKind::Exp, 0.5, 300, 1});
  ASSERT_EQ(mask_count(16, linear.ratio_at(1)), 0u);
  for (const auto& batch : epoch_batches(m, linear, 1, 5, 3)) {
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const auto& item = m.items[batch.ids[r]];
      for (std::size_t i = 0; i < batch.dim; ++i) {
        EXPECT_EQ(batch.inputs[r * batch.dim + i], item.image.pixels()[i] / 255.0f);
      }
    }
  }
}

TEST(EpochBatches, CoverageAndDeterminism) {
  const auto m = make_synthetic({"two-shapes", 37, 11, 2}, PatchGrid{4, 4});
  const auto r = constant_schedule(0.4, 5);
  for (std::size_t k = 1; k <= 5; ++k) {
    const auto a = epoch_batches(m, r, k, 8, 17);
    EXPECT_EQ(a, epoch_batches(m, r, k, 8, 17));
    std::multiset<std::uint64_t> ids;
    for (const auto& b : a) ids.insert(b.ids.begin(), b.ids.end());
    const auto train = m.indices(Split::Train);
    EXPECT_EQ(ids, std::multiset<std::uint64_t>(train.begin(), train.end()));
  }
  EXPECT_NE(epoch_batches(m, r, 1, 8, 17), epoch_batches(m, r, 2, 8, 17));
  EXPECT_NE(epoch_batches(m, r, 1, 8, 17), epoch_batches(m, r, 1, 8, 18));
}

TEST(EpochBatches, MaskedCountMatchesRatio) {
  const auto m = make_synthetic({"two-shapes", 16, 0, 3}, PatchGrid{4, 4});
  for (auto mode : {MaskingMode::Gradient, MaskingMode::Uniform}) {
    for (const auto& b : epoch_batches(m, constant_schedule(0.5, 1), 1, 16, 1, {mode, Replacement::Without})) {
      for (std::size_t r = 0; r < b.rows; ++r) {
        std::size_t zero_patches = 0;
        for (std::size_t patch = 0; patch < 16; ++patch) {
          bool all_zero = true;
          for (std::size_t y = (patch / 4) * 4; y < (patch / 4) * 4 + 4; ++y)
            for (std::size_t x = (patch % 4) * 4; x < (patch % 4) * 4 + 4; ++x)
              all_zero &= b.inputs[r * 256 + y * 16 + x] == 0.0f;
          zero_patches += all_zero;
        }
        EXPECT_EQ(zero_patches, 8u);  // backgrounds are never exactly 0
      }
    }
  }
}

TEST(EpochBatches, ValidationItemsAreNeverMasked) {
  const auto m = make_synthetic({"two-shapes", 8, 6, 4}, PatchGrid{2, 2});
  std::set<std::uint64_t> val_ids;
  for (auto i : m.indices(Split::Val)) val_ids.insert(m.items[i].id);
  for (std::size_t k = 1; k <= 3; ++k) {
    for (const auto& b : epoch_batches(m, constant_schedule(0.9, 3), k, 3, 1)) {
      for (auto id : b.ids) EXPECT_FALSE(val_ids.count(id));
    }
  }
  const auto val = split_batch(m, Split::Val);
  ASSERT_EQ(val.rows, 6u);
  for (std::size_t r = 0; r < val.rows; ++r) {
    const auto& img = m.items[val.ids[r]].image;
    for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(val.inputs[r * 256 + i], img.pixels()[i] / 255.0f);
  }
}

TEST(EpochBatches, PerStepGranularityUsesStepIndex) {
  const auto m = make_synthetic({"two-shapes", 8, 0, 4}, PatchGrid{4, 4});
  const auto r = build_schedule(ScheduleSpec{ScheduleKind::Linear, 0.5, 8, 1});  // 2 epochs x 4 steps
  const auto stream = make_epoch_stream(m, r, 2, 2, 1, Granularity::PerStep);
  EXPECT_EQ(stream.ratios, (std::vector<double>{r.ratio_at(5), r.ratio_at(6), r.ratio_at(7), r.ratio_at(8)}));
}

TEST(BatchProducer, MatchesSequentialAssembly) {
  const auto m = make_synthetic({"two-shapes", 50, 0, 6}, PatchGrid{4, 4});
  const auto r = constant_schedule(0.3, 2);
  const auto expected = epoch_batches(m, r, 2, 7, 5);
  for (std::size_t workers : {1u, 3u}) {
    for (std::size_t capacity : {1u, 4u}) {
      BatchProducer producer(m, make_epoch_stream(m, r, 2, 7, 5), {}, workers, capacity);
      std::vector<Batch> got;
      while (auto b = producer.next()) got.push_back(std::move(*b));
      EXPECT_EQ(got, expected) << workers << " workers, capacity " << capacity;
    }
  }
}

TEST(BatchProducer, EarlyDestructionJoinsCleanly) {
  const auto m = make_synthetic({"two-shapes", 50, 0, 6}, PatchGrid{4, 4});
  BatchProducer producer(m, make_epoch_stream(m, constant_schedule(0.3, 1), 1, 5, 5), {}, 2, 2);
  ASSERT_TRUE(producer.next().has_value());
}

}  // namespace
}  // namespace cbm
