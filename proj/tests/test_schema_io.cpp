#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tcdsg/errors.hpp"
#include "tcdsg/schema_io.hpp"

using namespace tcdsg;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& contents) {
    static int counter = 0;
    path = (std::filesystem::temp_directory_path() /
            ("tcdsg_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
               .string();
    std::ofstream out(path);
    out << contents;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

RelationVocab test_vocab() {
  RelationVocab v;
  v.subject_classes = {"person"};
  v.object_classes = {"cup", "table"};
  v.relation_classes = {{"holding", false}, {"standing", true}};
  return v;
}

const char* kGtThreeFrames =
    R"({"video_id":"v1","frame_idx":0,"width":100,"height":50,"triplets":[{"sub":{"id":1,"cls":0,"box":[10,5,30,25]},"obj":{"id":2,"cls":0,"box":[40,10,60,30]},"rel":0}]}
{"video_id":"v1","frame_idx":1,"width":100,"height":50,"triplets":[{"sub":{"id":1,"cls":0,"box":[12,5,32,25]},"obj":null,"rel":1}]}
{"video_id":"v1","frame_idx":2,"width":100,"height":50,"triplets":[]}
)";

}  // namespace

TEST_CASE("gt reader parses and normalizes a well-formed fixture") {
  TempFile file(kGtThreeFrames);
  const RelationVocab vocab = test_vocab();
  const auto frames = read_gt_stream(file.path, &vocab);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0].frame_idx == 0);
  CHECK(frames[1].frame_idx == 1);
  CHECK(frames[2].triplets.empty());
  const GtTriplet& t = frames[0].triplets.at(0);
  CHECK(t.subject.box.x1 == doctest::Approx(0.1));
  CHECK(t.subject.box.y2 == doctest::Approx(0.5));
  CHECK(t.subject.id == 1);
  REQUIRE(t.object.has_value());
  CHECK(t.object->box.x2 == doctest::Approx(0.6));
  CHECK(frames[1].triplets.at(0).objectless());
}

TEST_CASE("gt reader rejects malformed input with line numbers") {
  SUBCASE("empty file is an empty stream") {
    TempFile file("");
    CHECK(read_gt_stream(file.path).empty());
  }
  SUBCASE("duplicate frame") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"width":10,"height":10,"triplets":[]}
{"video_id":"v1","frame_idx":0,"width":10,"height":10,"triplets":[]}
)");
    CHECK_THROWS_WITH_AS(read_gt_stream(file.path),
                         doctest::Contains(":2: duplicate frame"), ValidationError);
  }
  SUBCASE("out of order frames") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":5,"width":10,"height":10,"triplets":[]}
{"video_id":"v1","frame_idx":3,"width":10,"height":10,"triplets":[]}
)");
    CHECK_THROWS_AS(read_gt_stream(file.path), ValidationError);
  }
  SUBCASE("video regrouping") {
    TempFile file(
        R"({"video_id":"a","frame_idx":0,"width":10,"height":10,"triplets":[]}
{"video_id":"b","frame_idx":0,"width":10,"height":10,"triplets":[]}
{"video_id":"a","frame_idx":1,"width":10,"height":10,"triplets":[]}
)");
    CHECK_THROWS_WITH_AS(read_gt_stream(file.path), doctest::Contains("not grouped"),
                         ValidationError);
  }
  SUBCASE("invalid json names the line") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"width":10,"height":10,"triplets":[]}
{nope}
)");
    CHECK_THROWS_WITH_AS(read_gt_stream(file.path), doctest::Contains(":2: invalid JSON"),
                         ValidationError);
  }
  SUBCASE("out-of-bounds box") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"width":10,"height":10,"triplets":[{"sub":{"id":1,"cls":0,"box":[0,0,11,5]},"obj":null,"rel":1}]}
)");
    const RelationVocab vocab = test_vocab();
    CHECK_THROWS_WITH_AS(read_gt_stream(file.path, &vocab), doctest::Contains("out of bounds"),
                         ValidationError);
  }
  SUBCASE("objectless mismatch against vocabulary") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"width":10,"height":10,"triplets":[{"sub":{"id":1,"cls":0,"box":[0,0,5,5]},"obj":null,"rel":0}]}
)");
    const RelationVocab vocab = test_vocab();
    CHECK_THROWS_WITH_AS(read_gt_stream(file.path, &vocab), doctest::Contains("requires an object"),
                         ValidationError);
  }
  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(read_gt_stream("/nonexistent/gt.jsonl"), IoError);
  }
}

TEST_CASE("pred reader validates the probability simplex") {
  SUBCASE("off-simplex rejected") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"preds":[{"q":0,"sub_probs":[0.4,0.5],"obj_probs":[0.5,0.2,0.3],"rel_probs":[1.0,0.0],"sub_box":[0,0,0.5,0.5],"obj_box":[0,0,0.5,0.5]}]}
)");
    CHECK_THROWS_WITH_AS(read_pred_stream(file.path), doctest::Contains("sums to"),
                         ValidationError);
  }
  SUBCASE("duplicate query index rejected") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"preds":[{"q":3,"sub_probs":[1.0,0.0],"obj_probs":[1.0,0.0,0.0],"rel_probs":[1.0,0.0],"sub_box":[0,0,0.5,0.5],"obj_box":[0,0,0.5,0.5]},{"q":3,"sub_probs":[1.0,0.0],"obj_probs":[1.0,0.0,0.0],"rel_probs":[1.0,0.0],"sub_box":[0,0,0.5,0.5],"obj_box":[0,0,0.5,0.5]}]}
)");
    CHECK_THROWS_WITH_AS(read_pred_stream(file.path), doctest::Contains("duplicate query"),
                         ValidationError);
  }
  SUBCASE("distribution sizes checked against the vocabulary") {
    TempFile file(
        R"({"video_id":"v1","frame_idx":0,"preds":[{"q":0,"sub_probs":[1.0,0.0,0.0],"obj_probs":[1.0,0.0,0.0],"rel_probs":[1.0,0.0],"sub_box":[0,0,0.5,0.5],"obj_box":[0,0,0.5,0.5]}]}
)");
    const RelationVocab vocab = test_vocab();  // 1 subject class -> expects 2 entries
    CHECK_THROWS_WITH_AS(read_pred_stream(file.path, &vocab), doctest::Contains("expected 2"),
                         ValidationError);
  }
}

TEST_CASE("round trips") {
  SUBCASE("gt write -> read recovers the model") {
    TempFile file(kGtThreeFrames);
    const RelationVocab vocab = test_vocab();
    const auto frames = read_gt_stream(file.path, &vocab);
    std::ostringstream out;
    write_gt_stream(out, frames);
    TempFile second(out.str());
    const auto again = read_gt_stream(second.path, &vocab);
    REQUIRE(again.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(again[i].video_id == frames[i].video_id);
      CHECK(again[i].frame_idx == frames[i].frame_idx);
      REQUIRE(again[i].triplets.size() == frames[i].triplets.size());
      for (std::size_t j = 0; j < frames[i].triplets.size(); ++j) {
        const auto& a = again[i].triplets[j];
        const auto& b = frames[i].triplets[j];
        CHECK(a.subject.id == b.subject.id);
        CHECK(a.relation == b.relation);
        CHECK(a.subject.box.x1 == doctest::Approx(b.subject.box.x1).epsilon(1e-12));
        CHECK(a.subject.box.y2 == doctest::Approx(b.subject.box.y2).epsilon(1e-12));
      }
    }
  }
  SUBCASE("pred write -> read is exact") {
    FramePrediction frame;
    frame.video_id = "v9";
    frame.frame_idx = 4;
    QueryPrediction qp;
    qp.query = 2;
    qp.subject_probs = {0.25, 0.75};
    qp.object_probs = {0.125, 0.5, 0.375};
    qp.relation_probs = {0.0625, 0.9375};
    qp.subject_box = Box{0.1, 0.2, 0.3, 0.4};
    qp.object_box = Box{0.5, 0.5, 0.75, 0.875};
    qp.union_box = Box{0.1, 0.2, 0.75, 0.875};
    frame.predictions.push_back(qp);

    std::ostringstream out;
    write_pred_stream(out, std::vector<FramePrediction>{frame});
    TempFile file(out.str());
    const auto again = read_pred_stream(file.path);
    REQUIRE(again.size() == 1);
    REQUIRE(again[0].predictions.size() == 1);
    const auto& r = again[0].predictions[0];
    CHECK(r.query == 2);
    CHECK(r.subject_probs == qp.subject_probs);
    CHECK(r.object_probs == qp.object_probs);
    CHECK(r.subject_box == qp.subject_box);
    REQUIRE(r.union_box.has_value());
    CHECK(*r.union_box == *qp.union_box);

    // a second write produces identical bytes
    std::ostringstream out2;
    write_pred_stream(out2, again);
    CHECK(out.str() == out2.str());
  }
  SUBCASE("tracklets write -> read is exact") {
    Tracklet t;
    t.video_id = "v1";
    t.triplet = TripletLabels{0, 1, 0};
    t.interval = Interval{3, 5};
    t.subject_boxes = {Box{0, 0, 0.5, 0.5}, Box{0.1, 0, 0.6, 0.5}, Box{0.2, 0, 0.7, 0.5}};
    t.object_boxes = {Box{0.5, 0.5, 1, 1}, Box{0.5, 0.5, 1, 1}, Box{0.5, 0.5, 1, 1}};
    t.score = 0.625;
    t.query = 7;
    Tracklet objectless;
    objectless.video_id = "v1";
    objectless.triplet = TripletLabels{0, std::nullopt, 1};
    objectless.interval = Interval{0, 0};
    objectless.subject_boxes = {Box{0, 0, 0.25, 0.25}};
    objectless.score = 1.0;
    objectless.query = 2;

    std::ostringstream out;
    write_tracklets(out, std::vector<Tracklet>{t, objectless});
    TempFile file(out.str());
    const auto again = read_tracklets(file.path);
    REQUIRE(again.size() == 2);
    CHECK(again[0].triplet == t.triplet);
    CHECK(again[0].interval == t.interval);
    CHECK(again[0].subject_boxes == t.subject_boxes);
    CHECK(again[0].object_boxes == t.object_boxes);
    CHECK(again[0].score == t.score);
    CHECK(again[1].triplet.object_cls == std::nullopt);
    CHECK(again[1].object_boxes.empty());
  }
  SUBCASE("vocab write -> read is exact") {
    const RelationVocab vocab = test_vocab();
    std::ostringstream out;
    write_vocab(out, vocab);
    TempFile file(out.str());
    const RelationVocab again = read_vocab(file.path);
    CHECK(again.subject_classes == vocab.subject_classes);
    CHECK(again.object_classes == vocab.object_classes);
    REQUIRE(again.relation_classes.size() == 2);
    CHECK(again.relation_classes[1].objectless);
  }
}

TEST_CASE("vocab validation") {
  RelationVocab vocab = test_vocab();
  vocab.object_classes.push_back("cup");
  CHECK_THROWS_WITH_AS(validate(vocab), doctest::Contains("duplicate"), ValidationError);
}

TEST_CASE("mask_extent_to_box") {
  using P = std::pair<double, double>;
  SUBCASE("single point degenerates") {
    const std::vector<P> pts{{5, 5}};
    const Box b = mask_extent_to_box(pts, 10, 10);
    CHECK(b == Box{0.5, 0.5, 0.5, 0.5});
  }
  SUBCASE("two corners") {
    const std::vector<P> pts{{0, 0}, {9, 9}};
    const Box b = mask_extent_to_box(pts, 10, 10);
    CHECK(b == Box{0, 0, 0.9, 0.9});
  }
  SUBCASE("L-shaped mask equals exhaustive min/max") {
    std::vector<P> pts;
    for (int x = 2; x <= 4; ++x)
      for (int y = 2; y <= 8; ++y) pts.emplace_back(x, y);
    for (int x = 4; x <= 7; ++x) pts.emplace_back(x, 8);
    double min_x = 1e9, min_y = 1e9, max_x = -1, max_y = -1;
    for (const auto& [x, y] : pts) {
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
    const Box b = mask_extent_to_box(pts, 10, 10);
    CHECK(b == Box{min_x / 10, min_y / 10, max_x / 10, max_y / 10});
  }
  SUBCASE("empty list rejected") {
    CHECK_THROWS_AS(mask_extent_to_box({}, 10, 10), ValidationError);
  }
  SUBCASE("point outside frame rejected") {
    const std::vector<P> pts{{11, 5}};
    CHECK_THROWS_AS(mask_extent_to_box(pts, 10, 10), ValidationError);
  }
}
