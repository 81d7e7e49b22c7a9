#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "synood/dataset.hpp"
#include "synood/error.hpp"
#include "synood/image.hpp"
#include "synood/png_io.hpp"
#include "synood/record_io.hpp"
#include "synood/toydata.hpp"
#include "testutil.hpp"

using namespace synood;
using testutil::TempDir;

namespace {

ImageU8 gradient_image(int h, int w, int c) {
  ImageU8 img;
  img.h = h;
  img.w = w;
  img.c = c;
  img.data.resize(static_cast<std::size_t>(h) * w * c);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        img.data[(static_cast<std::size_t>(r) * w + col) * c + ch] =
            static_cast<std::uint8_t>((r * 7 + col * 13 + ch * 41) % 256);
      }
    }
  }
  return img;
}

}  // namespace

// ---------------------------------------------------------------------------
// Record files
// ---------------------------------------------------------------------------

TEST_CASE("record files round-trip exactly, including unlabeled entries") {
  TempDir dir("records");
  RecordFile file;
  file.header = {3, 8, 8, 3, 2};
  file.labels = {0, kUnlabeledSentinel, 1};
  for (int i = 0; i < 3; ++i) file.images.push_back(gradient_image(8, 8, 3));
  file.images[1].data[0] = 255;

  const std::string path = dir.str("data.bin");
  write_records(path, file);
  RecordFile back = read_records(path);
  CHECK(back.header.count == 3);
  CHECK(back.header.h == 8);
  CHECK(back.header.w == 8);
  CHECK(back.header.c == 3);
  CHECK(back.header.class_count == 2);
  CHECK(back.labels == file.labels);
  for (int i = 0; i < 3; ++i) CHECK(back.images[i].data == file.images[i].data);

  RecordHeader header = read_record_header(path);
  CHECK(header.count == 3);
  CHECK(header.class_count == 2);
}

TEST_CASE("record reader rejects corrupt files") {
  TempDir dir("records-bad");
  const std::string path = dir.str("bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(read_records(path), IoError);

  // Valid header, truncated payload.
  RecordFile file;
  file.header = {2, 4, 4, 3, 1};
  file.labels = {0, 0};
  file.images = {gradient_image(4, 4, 3), gradient_image(4, 4, 3)};
  const std::string trunc = dir.str("trunc.bin");
  write_records(trunc, file);
  {
    std::ifstream in(trunc, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 10);
    std::ofstream out(trunc, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(read_records(trunc), IoError);
  CHECK_THROWS_AS(read_records(dir.str("missing.bin")), IoError);
}

// ---------------------------------------------------------------------------
// PNG + image helpers
// ---------------------------------------------------------------------------

TEST_CASE("png write/read round-trips RGB data") {
  TempDir dir("png");
  ImageU8 img = gradient_image(16, 12, 3);
  const std::string path = dir.str("img.png");
  write_png(path, img);
  ImageU8 back = read_png(path);
  CHECK(back.h == 16);
  CHECK(back.w == 12);
  CHECK(back.c == 3);
  CHECK(back.data == img.data);
}

TEST_CASE("grayscale png is expanded to three channels on read") {
  TempDir dir("png-gray");
  ImageU8 gray = gradient_image(8, 8, 1);
  const std::string path = dir.str("gray.png");
  write_png(path, gray);
  ImageU8 back = read_png(path);
  CHECK(back.c == 3);
  for (int r = 0; r < 8; ++r) {
    for (int col = 0; col < 8; ++col) {
      const std::uint8_t v = gray.at(r, col, 0);
      CHECK(back.at(r, col, 0) == v);
      CHECK(back.at(r, col, 1) == v);
      CHECK(back.at(r, col, 2) == v);
    }
  }
}

TEST_CASE("read_png raises IoError naming the offending file") {
  TempDir dir("png-bad");
  const std::string path = dir.str("broken.png");
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a png at all";
  }
  try {
    read_png(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
  }
}

TEST_CASE("to_tensor / to_u8 round-trip and layout") {
  ImageU8 img = gradient_image(4, 5, 3);
  Tensor t = to_tensor(img);
  CHECK(t.shape() == std::vector<int>{3, 4, 5});
  CHECK(t.min() >= 0.0);
  CHECK(t.max() <= 1.0);
  // Channel-last byte (r=1,c=2,ch=1) lands at plane 1 of the tensor.
  CHECK(t[1 * 20 + 1 * 5 + 2] == doctest::Approx(img.at(1, 2, 1) / 255.0));
  ImageU8 back = to_u8(t);
  CHECK(back.data == img.data);
  CHECK_THROWS_AS(to_u8(Tensor({3, 4})), ValidationError);
}

TEST_CASE("bilinear_resize is identity at equal size and averages on downscale") {
  Tensor src({1, 2, 2});
  src[0] = 0.0;
  src[1] = 1.0;
  src[2] = 1.0;
  src[3] = 0.0;
  Tensor same = bilinear_resize(src, 2, 2);
  CHECK(same[0] == 0.0);
  CHECK(same[3] == 0.0);
  Tensor down = bilinear_resize(src, 1, 1);
  CHECK(down[0] == doctest::Approx(0.5));
  Tensor up = bilinear_resize(src, 4, 4);
  CHECK(up.shape() == std::vector<int>{1, 4, 4});
  CHECK(up.min() >= 0.0);
  CHECK(up.max() <= 1.0);
  CHECK_THROWS_AS(bilinear_resize(src, 0, 4), ValidationError);
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

namespace {

std::string write_record_dataset(const TempDir& dir, const std::string& name, int count,
                                 int class_count, bool labeled = true) {
  RecordFile file;
  file.header = {static_cast<std::uint32_t>(count), 32, 32, 3,
                 static_cast<std::uint32_t>(class_count)};
  for (int i = 0; i < count; ++i) {
    file.labels.push_back(labeled ? static_cast<std::uint32_t>(i % class_count)
                                  : kUnlabeledSentinel);
    file.images.push_back(gradient_image(32, 32, 3));
  }
  const std::string path = dir.str(name);
  write_records(path, file);
  return path;
}

}  // namespace

TEST_CASE("load_dataset reads record files and validates the manifest") {
  TempDir dir("load");
  DatasetManifest manifest;
  manifest.name = "toy";
  manifest.root = write_record_dataset(dir, "in_d.bin", 10, 2);
  manifest.image_count = 10;
  manifest.class_count = 2;

  Dataset ds = load_dataset(manifest, Source::IN_D_TRAIN);
  CHECK(ds.size() == 10);
  CHECK(ds.class_count == 2);
  CHECK(ds.items[0].source == Source::IN_D_TRAIN);
  CHECK(ds.items[0].pixels.shape() == std::vector<int>{3, 32, 32});
  CHECK(ds.items[3].label == 1);

  manifest.image_count = 11;  // header disagrees
  CHECK_THROWS_AS(load_dataset(manifest, Source::IN_D_TRAIN), ValidationError);
  manifest.image_count = 10;
  manifest.class_count = 5;
  CHECK_THROWS_AS(load_dataset(manifest, Source::IN_D_TRAIN), ValidationError);
  manifest.class_count = 2;
  manifest.root = dir.str("nowhere.bin");
  CHECK_THROWS_AS(load_dataset(manifest, Source::IN_D_TRAIN), IoError);
}

TEST_CASE("load_dataset reads a PNG class tree, lenient mode skips bad files") {
  TempDir dir("tree");
  namespace fs = std::filesystem;
  for (const char* cls : {"ant", "bee"}) {
    fs::create_directories(dir.path() / cls);
    for (int i = 0; i < 3; ++i) {
      write_png((dir.path() / cls / (std::to_string(i) + ".png")).string(),
                gradient_image(32, 32, 3));
    }
  }
  {
    std::ofstream out(dir.path() / "ant" / "corrupt.png", std::ios::binary);
    out << "junk";
  }

  DatasetManifest manifest;
  manifest.name = "tree";
  manifest.root = dir.str();

  CHECK_THROWS_AS(load_dataset(manifest, Source::IN_D_TRAIN, /*strict=*/true), IoError);

  Dataset ds = load_dataset(manifest, Source::IN_D_TRAIN, /*strict=*/false);
  CHECK(ds.size() == 6);
  CHECK(ds.class_count == 2);
  // Classes are assigned alphabetically: ant -> 0, bee -> 1.
  std::map<int, int> per_class;
  for (const auto& item : ds.items) ++per_class[item.label];
  CHECK(per_class[0] == 3);
  CHECK(per_class[1] == 3);
}

TEST_CASE("non-32x32 images are resized on load") {
  TempDir dir("resize");
  namespace fs = std::filesystem;
  fs::create_directories(dir.path() / "only");
  write_png((dir.path() / "only" / "big.png").string(), gradient_image(64, 48, 3));
  DatasetManifest manifest;
  manifest.name = "resize";
  manifest.root = dir.str();
  Dataset ds = load_dataset(manifest, Source::OOD_TEST);
  REQUIRE(ds.size() == 1);
  CHECK(ds.items[0].pixels.shape() == std::vector<int>{3, 32, 32});
  CHECK(ds.items[0].source == Source::OOD_TEST);
}

// ---------------------------------------------------------------------------
// Split / batches / pseudo-labels
// ---------------------------------------------------------------------------

namespace {

Dataset tiny_dataset(int n, int class_count) {
  Dataset ds;
  ds.name = "tiny";
  ds.class_count = class_count;
  for (int i = 0; i < n; ++i) {
    LabeledImage item;
    item.pixels = Tensor({3, 4, 4}, static_cast<double>(i) / n);
    item.label = i % class_count;
    item.origin = "item-" + std::to_string(i);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

TEST_CASE("split partitions the dataset disjointly and deterministically") {
  Dataset ds = tiny_dataset(100, 2);
  SplitResult a = split(ds, {0.8, 0.1, 0.1}, 7);
  SplitResult b = split(ds, {0.8, 0.1, 0.1}, 7);
  SplitResult c = split(ds, {0.8, 0.1, 0.1}, 8);

  CHECK(a.train.size() == 80);
  CHECK(a.val.size() == 10);
  CHECK(a.test.size() == 10);
  CHECK(a.train.items[0].source == Source::IN_D_TRAIN);
  CHECK(a.val.items[0].source == Source::IN_D_VAL);
  CHECK(a.test.items[0].source == Source::IN_D_TEST);

  auto origins = [](const SplitResult& s) {
    std::multiset<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      for (const auto& item : part->items) all.insert(item.origin);
    }
    return all;
  };
  std::multiset<std::string> union_a = origins(a);
  CHECK(union_a.size() == 100);
  CHECK(std::set<std::string>(union_a.begin(), union_a.end()).size() == 100);  // disjoint

  CHECK(a.train.items[5].origin == b.train.items[5].origin);  // same seed, same split
  bool any_difference = false;
  for (int i = 0; i < a.train.size(); ++i) {
    if (a.train.items[static_cast<std::size_t>(i)].origin !=
        c.train.items[static_cast<std::size_t>(i)].origin) {
      any_difference = true;
      break;
    }
  }
  CHECK(any_difference);

  CHECK_THROWS_AS(split(ds, {0.8, 0.2, 0.0}, 1), ValidationError);
  CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2}, 1), ValidationError);
}

TEST_CASE("BatchIterator visits every index once per epoch and wraps") {
  BatchIterator it(10, 3, 42);
  std::multiset<int> seen;
  // One epoch = 4 batches (3+3+3+1).
  std::vector<std::size_t> sizes;
  for (int b = 0; b < 4; ++b) {
    std::vector<int> batch = it.next();
    sizes.push_back(batch.size());
    seen.insert(batch.begin(), batch.end());
  }
  CHECK(sizes == std::vector<std::size_t>{3, 3, 3, 1});
  CHECK(seen.size() == 10);
  CHECK(std::set<int>(seen.begin(), seen.end()).size() == 10);
  CHECK(it.epoch() == 0);
  it.next();
  CHECK(it.epoch() == 1);

  BatchIterator same(10, 3, 42);
  CHECK(same.next() == BatchIterator(10, 3, 42).next());
  CHECK_THROWS_AS(BatchIterator(0, 3, 1), ValidationError);
  CHECK_THROWS_AS(BatchIterator(10, 0, 1), ValidationError);
}

TEST_CASE("gather_batch packs pixels and labels in index order") {
  Dataset ds = tiny_dataset(6, 3);
  Batch batch = gather_batch(ds, {4, 1});
  CHECK(batch.images.shape() == std::vector<int>{2, 3, 4, 4});
  CHECK(batch.labels == std::vector<int>{1, 1});
  CHECK(batch.images[0] == doctest::Approx(4.0 / 6.0));   // sample 0 spans 0..47
  CHECK(batch.images[47] == doctest::Approx(4.0 / 6.0));
  CHECK(batch.images[48] == doctest::Approx(1.0 / 6.0));  // sample 1 spans 48..95
  CHECK(batch.images[95] == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("pseudo_label assigns predictions and keeps sources") {
  Dataset ds = tiny_dataset(5, 2);
  for (auto& item : ds.items) {
    item.label = kUnlabeled;
    item.source = Source::EXTERNAL_UNLABELED;
  }
  auto predict = [](const Tensor& pixels) { return pixels[0] > 0.5 ? 1 : 0; };
  std::vector<LabeledImage> labeled = pseudo_label(predict, ds.items);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    CHECK(labeled[i].label == (labeled[i].pixels[0] > 0.5 ? 1 : 0));
    CHECK(labeled[i].source == Source::EXTERNAL_UNLABELED);
  }
}

// ---------------------------------------------------------------------------
// Toy data
// ---------------------------------------------------------------------------

TEST_CASE("toy shapes generator is deterministic and balanced") {
  ToyDataConfig cfg;
  cfg.class_count = 2;
  cfg.count = 40;
  cfg.ood_count = 10;
  cfg.external_count = 6;
  cfg.seed = 5;

  ToyData a = make_toy_shapes(cfg);
  ToyData b = make_toy_shapes(cfg);
  CHECK(a.in_d.images.size() == 40);
  CHECK(a.ood.images.size() == 10);
  CHECK(a.external.images.size() == 6);
  CHECK(a.in_d.header.class_count == 2);
  for (std::size_t i = 0; i < a.in_d.images.size(); ++i) {
    CHECK(a.in_d.images[i].data == b.in_d.images[i].data);
  }
  CHECK(a.in_d.labels == b.in_d.labels);

  std::map<std::uint32_t, int> counts;
  for (std::uint32_t label : a.in_d.labels) ++counts[label];
  CHECK(counts.size() == 2);
  CHECK(counts[0] + counts[1] == 40);
  CHECK(std::abs(counts[0] - counts[1]) <= 1);

  // OOD and external items carry the unlabeled sentinel.
  for (std::uint32_t label : a.ood.labels) CHECK(label == kUnlabeledSentinel);
  for (std::uint32_t label : a.external.labels) CHECK(label == kUnlabeledSentinel);

  ToyData c = make_toy_shapes({2, 40, 10, 6, 6});
  bool differs = false;
  for (std::size_t i = 0; i < c.in_d.images.size() && !differs; ++i) {
    differs = c.in_d.images[i].data != a.in_d.images[i].data;
  }
  CHECK(differs);  // another seed, other images
}

TEST_CASE("write_toy_shapes produces loadable record files") {
  TempDir dir("toys");
  ToyDataConfig cfg;
  cfg.class_count = 3;
  cfg.count = 12;
  cfg.ood_count = 5;
  cfg.external_count = 4;
  write_toy_shapes(cfg, dir.str());

  DatasetManifest manifest;
  manifest.name = "toy";
  manifest.root = dir.str("in_d.bin");
  Dataset in_d = load_dataset(manifest, Source::IN_D_TRAIN);
  CHECK(in_d.size() == 12);
  CHECK(in_d.class_count == 3);

  manifest.root = dir.str("ood.bin");
  Dataset ood = load_dataset(manifest, Source::OOD_TEST);
  CHECK(ood.size() == 5);
  for (const auto& item : ood.items) CHECK(item.label == kUnlabeled);

  manifest.root = dir.str("external.bin");
  Dataset ext = load_dataset(manifest, Source::EXTERNAL_UNLABELED);
  CHECK(ext.size() == 4);
}

TEST_CASE("toy classes are visually distinct") {
  // Mean image per class should differ clearly between the shape families;
  // this guards against degenerate toy data that would make the end-to-end
  // acceptance runs meaningless.
  ToyDataConfig cfg;
  cfg.class_count = 2;
  cfg.count = 60;
  cfg.ood_count = 30;
  ToyData data = make_toy_shapes(cfg);

  auto mean_image = [](const RecordFile& file, int only_label) {
    std::vector<double> acc(file.images[0].data.size(), 0.0);
    int n = 0;
    for (std::size_t i = 0; i < file.images.size(); ++i) {
      if (only_label >= 0 && file.labels[i] != static_cast<std::uint32_t>(only_label)) continue;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += file.images[i].data[j] / 255.0;
      ++n;
    }
    for (double& v : acc) v /= n;
    return acc;
  };
  const std::vector<double> class0 = mean_image(data.in_d, 0);
  const std::vector<double> class1 = mean_image(data.in_d, 1);
  const std::vector<double> ood = mean_image(data.ood, -1);

  auto l2 = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  CHECK(l2(class0, class1) > 1.0);
  CHECK(l2(class0, ood) > 1.0);
  CHECK(l2(class1, ood) > 1.0);
}
