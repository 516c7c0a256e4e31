/*
 * Copyright 2026 The cdstl authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cdstl/binio.hpp"
#include "cdstl/dataset.hpp"
#include "cdstl/distilled.hpp"
#include "cdstl/errors.hpp"
#include "cdstl/hash.hpp"
#include "cdstl/idx.hpp"
#include "cdstl/shapes.hpp"
#include "helpers.hpp"

using namespace cdstl;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("make_shapes is bitwise deterministic in the seed") {
  auto a = make_shapes(1, 5, 16, 4);
  auto b = make_shapes(1, 5, 16, 4);
  REQUIRE(a.images.numel() == b.images.numel());
  for (int64_t i = 0; i < a.images.numel(); ++i) CHECK(a.images.at(i) == b.images.at(i));
  CHECK(a.labels == b.labels);

  auto c = make_shapes(2, 5, 16, 4);
  bool any_diff = false;
  for (int64_t i = 0; i < a.images.numel() && !any_diff; ++i)
    any_diff = a.images.at(i) != c.images.at(i);
  CHECK(any_diff);
}

TEST_CASE("make_shapes class balance: per_class=50, classes=4") {
  auto ds = make_shapes(7, 50, 16, 4);
  CHECK(ds.size() == 200);
  auto h = ds.class_histogram();
  REQUIRE(h.size() == 4);
  for (auto c : h) CHECK(c == 50);
  ds.validate();
}

TEST_CASE("make_shapes rejects bad configs") {
  CHECK_THROWS_AS(make_shapes(1, 5, 17, 4), config_error);
  CHECK_THROWS_AS(make_shapes(1, 5, 16, 1), config_error);
  CHECK_THROWS_AS(make_shapes(1, 5, 16, 11), config_error);
  CHECK_THROWS_AS(make_shapes(1, 1, 16, 4), config_error);
}

TEST_CASE("noise-free samples re-render exactly from the jitter log") {
  auto [ds, log] = make_shapes_logged(21, 4, 16, 3, /*noise_amplitude=*/0.0);
  REQUIRE(log.size() == static_cast<size_t>(ds.size()));
  for (int64_t i = 0; i < ds.size(); ++i) {
    auto img = render_glyph(ds.labels[static_cast<size_t>(i)], 16, log[static_cast<size_t>(i)]);
    for (int64_t p = 0; p < 256; ++p)
      CHECK(ds.images.at(i * 256 + p) == img[static_cast<size_t>(p)]);
  }
}

TEST_CASE("shapes pixels live on the 8-bit grid in [0,1]") {
  auto ds = make_shapes(3, 4, 16, 4);
  for (int64_t i = 0; i < ds.images.numel(); ++i) {
    double v = ds.images.at(i);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    double scaled = v * 255.0;
    CHECK(std::fabs(scaled - std::round(scaled)) < 1e-9);
  }
}

TEST_CASE("IDX loader parses a hand-written fixture byte by byte") {
  // 2 images of 4x4 and 2 labels, authored explicitly
  ByteWriter iw;
  iw.u32be(0x00000803);
  iw.u32be(2);
  iw.u32be(4);
  iw.u32be(4);
  for (int i = 0; i < 16; ++i) iw.u8(static_cast<uint8_t>(i * 16));  // image 0
  for (int i = 0; i < 16; ++i) iw.u8(255);                           // image 1
  ByteWriter lw;
  lw.u32be(0x00000801);
  lw.u32be(2);
  lw.u8(1);
  lw.u8(0);

  std::string ip = temp_path("cdstl_idx_images"), lp = temp_path("cdstl_idx_labels");
  write_file_atomic(ip, iw.data());
  write_file_atomic(lp, lw.data());

  auto ds = load_idx(ip, lp);
  CHECK(ds.images.shape() == Shape{2, 1, 4, 4});
  CHECK(ds.labels == std::vector<int>{1, 0});
  for (int i = 0; i < 16; ++i)
    CHECK(ds.images.at(i) == doctest::Approx(static_cast<double>(i * 16) / 255.0));
  for (int i = 0; i < 16; ++i) CHECK(ds.images.at(16 + i) == 1.0);  // all-255 pixels

  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
}

TEST_CASE("IDX loader rejects malformed files with byte offsets") {
  std::string ip = temp_path("cdstl_idx_bad_images"), lp = temp_path("cdstl_idx_bad_labels");

  SUBCASE("bad magic") {
    ByteWriter iw;
    iw.u32be(0x12345678);
    iw.u32be(0);
    iw.u32be(4);
    iw.u32be(4);
    write_file_atomic(ip, iw.data());
    ByteWriter lw;
    lw.u32be(0x00000801);
    lw.u32be(0);
    write_file_atomic(lp, lw.data());
    CHECK_THROWS_AS(load_idx(ip, lp), format_error);
  }

  SUBCASE("count disagreement") {
    ByteWriter iw;
    iw.u32be(0x00000803);
    iw.u32be(1);
    iw.u32be(2);
    iw.u32be(2);
    for (int i = 0; i < 4; ++i) iw.u8(0);
    write_file_atomic(ip, iw.data());
    ByteWriter lw;
    lw.u32be(0x00000801);
    lw.u32be(2);
    lw.u8(0);
    lw.u8(0);
    write_file_atomic(lp, lw.data());
    CHECK_THROWS_AS(load_idx(ip, lp), format_error);
  }

  SUBCASE("truncated payload") {
    ByteWriter iw;
    iw.u32be(0x00000803);
    iw.u32be(2);
    iw.u32be(4);
    iw.u32be(4);
    for (int i = 0; i < 20; ++i) iw.u8(0);  // 12 bytes short
    write_file_atomic(ip, iw.data());
    ByteWriter lw;
    lw.u32be(0x00000801);
    lw.u32be(2);
    lw.u8(0);
    lw.u8(1);
    write_file_atomic(lp, lw.data());
    try {
      load_idx(ip, lp);
      FAIL("expected format_error");
    } catch (const format_error& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }

  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
}

TEST_CASE("IDX round trip is exact for 8-bit-quantizable data") {
  auto ds = make_shapes(5, 4, 16, 3);
  std::string ip = temp_path("cdstl_idx_rt_images"), lp = temp_path("cdstl_idx_rt_labels");
  save_idx(ds, ip, lp);
  auto back = load_idx(ip, lp);
  REQUIRE(back.images.numel() == ds.images.numel());
  for (int64_t i = 0; i < ds.images.numel(); ++i) CHECK(back.images.at(i) == ds.images.at(i));
  CHECK(back.labels == ds.labels);
  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
}

TEST_CASE("stratified_holdout: fraction 0.25 of 8 per class leaves 2 test each") {
  auto ds = make_shapes(11, 8, 16, 3);
  auto [train, test] = stratified_holdout(ds, 0.25, 99);
  auto ht = test.class_histogram();
  for (auto c : ht) CHECK(c == 2);
  auto hr = train.class_histogram();
  for (auto c : hr) CHECK(c == 6);
  CHECK(train.split == SplitTag::train);
  CHECK(test.split == SplitTag::test);
}

TEST_CASE("stratified_holdout splits are disjoint and exhaustive") {
  auto ds = make_shapes(13, 10, 16, 4);
  auto [train, test] = stratified_holdout(ds, 0.3, 5);
  CHECK(train.size() + test.size() == ds.size());
  // membership check via image hashes: every original sample appears exactly once
  auto key = [&](const LabeledDataset& d, int64_t i) {
    return fnv1a64(&d.images.raw()[static_cast<size_t>(i) * 256], 256 * sizeof(double));
  };
  std::vector<uint64_t> orig, got;
  for (int64_t i = 0; i < ds.size(); ++i) orig.push_back(key(ds, i));
  for (int64_t i = 0; i < train.size(); ++i) got.push_back(key(train, i));
  for (int64_t i = 0; i < test.size(); ++i) got.push_back(key(test, i));
  std::sort(orig.begin(), orig.end());
  std::sort(got.begin(), got.end());
  CHECK(orig == got);
}

TEST_CASE("holdout seed change permutes membership but preserves counts") {
  auto ds = make_shapes(17, 12, 16, 3);
  auto [tr1, te1] = stratified_holdout(ds, 0.25, 1);
  auto [tr2, te2] = stratified_holdout(ds, 0.25, 2);
  CHECK(te1.class_histogram() == te2.class_histogram());
  bool diff = false;
  for (int64_t i = 0; i < te1.images.numel() && !diff; ++i)
    diff = te1.images.at(i) != te2.images.at(i);
  CHECK(diff);
}

TEST_CASE("holdout rejects classes with fewer than 2 samples") {
  LabeledDataset tiny;
  tiny.images = Tensor::zeros({3, 1, 2, 2});
  tiny.labels = {0, 0, 1};
  tiny.class_count = 2;
  CHECK_THROWS_AS(stratified_holdout(tiny, 0.25, 1), data_error);
}

namespace {

DistilledContainer sample_container() {
  DistilledContainer c;
  c.space = SynSpace::pixel;
  c.class_count = 10;
  c.ipc = 1;
  Rng rng(3);
  c.payload = Tensor::from({10, 1, 16, 16}, cdstl::testing::random_vec(rng, 10 * 256, 0.0, 1.0));
  for (int i = 0; i < 10; ++i) c.labels.push_back(i);
  c.provenance = {{"method", "dm"},     {"r", "0.2"},          {"mode", "easy"},
                  {"seed", "1"},        {"config_hash", "ab"}, {"dataset_hash", "cd"}};
  return c;
}

}  // namespace

TEST_CASE("DST1 save/load round trip is bit-exact") {
  auto c = sample_container();
  std::string path = temp_path("cdstl_test.dst");
  save_distilled(c, path);
  auto back = load_distilled(path);
  CHECK(back.space == c.space);
  CHECK(back.class_count == c.class_count);
  CHECK(back.ipc == c.ipc);
  CHECK(back.labels == c.labels);
  CHECK(back.provenance == c.provenance);
  REQUIRE(back.payload.shape() == c.payload.shape());
  for (int64_t i = 0; i < c.payload.numel(); ++i) CHECK(back.payload.at(i) == c.payload.at(i));
  // a second save produces identical bytes
  auto b1 = encode_distilled(c);
  auto b2 = encode_distilled(back);
  CHECK(b1 == b2);
  std::filesystem::remove(path);
}

TEST_CASE("flipping one payload byte on disk raises corruption_error") {
  auto c = sample_container();
  std::string path = temp_path("cdstl_test_corrupt.dst");
  save_distilled(c, path);
  auto bytes = read_file_bytes(path);
  bytes[64] ^= 0x01;  // somewhere inside the payload
  write_file_atomic(path, bytes);
  CHECK_THROWS_AS(load_distilled(path), corruption_error);
  std::filesystem::remove(path);
}

TEST_CASE("DST1 file size matches the header arithmetic") {
  auto c = sample_container();
  auto bytes = encode_distilled(c);
  size_t header = 4 + 1 + 2 + 2 + 1 + 4 * 4;  // magic, space, K, ipc, rank, dims
  size_t payload = 10 * 1 * 16 * 16 * 8;
  size_t labels = 2 * 10;
  size_t prov = 4 + provenance_to_json(c.provenance).size();
  size_t crc = 4;
  CHECK(bytes.size() == header + payload + labels + prov + crc);
}

TEST_CASE("container validation rejects broken label blocks") {
  auto c = sample_container();
  c.labels[3] = 9;  // not class-major ipc copies anymore
  CHECK_THROWS_AS(c.validate(), validation_error);

  auto d = sample_container();
  d.space = SynSpace::latent;  // latent requires decoder_hash provenance
  CHECK_THROWS_AS(d.validate(), validation_error);
  d.provenance["decoder_hash"] = "12";
  CHECK_NOTHROW(d.validate());
}
