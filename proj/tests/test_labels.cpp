#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace optimus;

namespace {

LabelStore::Clock fixed_clock(int seconds) {
    return [seconds] { return std::chrono::system_clock::time_point(std::chrono::seconds(1'700'000'000 + seconds)); };
}

}  // namespace

TEST(LabelRecordJson, RoundTrip) {
    const LabelRecord r{"s1_r0c1", 1, "ana", "2023-11-14T22:13:20Z", LabelSource::simulator};
    EXPECT_EQ(label_record_from_json(to_json(r)), r);
    EXPECT_EQ(to_json(r).dump(),
              R"({"annotator":"ana","label":1,"source":"simulator","target":"s1_r0c1","timestamp":"2023-11-14T22:13:20Z"})");
    EXPECT_EQ(iso8601_utc(std::chrono::system_clock::time_point(std::chrono::seconds(0))), "1970-01-01T00:00:00Z");
}

TEST(LabelRecordJson, RejectsBadRecords) {
    auto j = to_json(LabelRecord{"a", 0, "x", "t", LabelSource::human});
    auto bad = j;
    bad["label"] = 2;
    EXPECT_THROW(label_record_from_json(bad), Error);
    bad = j;
    bad["source"] = "robot";
    EXPECT_THROW(label_record_from_json(bad), Error);
    bad = j;
    bad.erase("annotator");
    EXPECT_THROW(label_record_from_json(bad), Error);
    bad = j;
    bad["target"] = "";
    EXPECT_THROW(label_record_from_json(bad), Error);
}

TEST(LabelLog, LatestRecordPerTargetAndAnnotatorWins) {
    const std::vector<LabelRecord> log{
        {"a", 1, "u1", "t1", LabelSource::human},
        {"a", 0, "u2", "t2", LabelSource::human},
        {"b", 1, "u1", "t3", LabelSource::human},
        {"a", 0, "u1", "t4", LabelSource::human},
    };
    const auto active = replay(log).records();
    ASSERT_EQ(active.size(), 3u);
    for (const auto& r : active)
        if (r.target == "a" && r.annotator == "u1") {
            EXPECT_EQ(r.timestamp, "t4");
        }
}

TEST(LabelLog, ParseReportsLineNumbers) {
    const std::string good = to_json(LabelRecord{"a", 1, "u", "t", LabelSource::human}).dump();
    EXPECT_EQ(parse_label_log(good + "\n\n" + good + "\n").size(), 2u);
    try {
        parse_label_log(good + "\n{not json\n", "log.jsonl");
        FAIL() << "expected a parse error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("log.jsonl:2"), std::string::npos) << e.what();
    }
}

TEST(LabelStore, ReplayOfFileEqualsLiveView) {
    const auto dir = fixtures::temp_dir("labels");
    const auto path = dir / "labels.jsonl";
    std::mt19937_64 rng(60);
    {
        LabelStore store(path, fixed_clock(0));
        for (int i = 0; i < 200; ++i)
            store.add("s" + std::to_string(rng() % 12), static_cast<int>(rng() % 2), "u" + std::to_string(rng() % 3));
        const auto live = store.active();
        const auto replayed = replay(parse_label_log(read_file(path))).records();
        EXPECT_EQ(live, replayed);
        LabelStore reopened(path);
        EXPECT_EQ(reopened.active(), live);
        EXPECT_EQ(parse_label_log(read_file(path)).size(), 200u);
    }
    std::filesystem::remove_all(dir);
}

TEST(LabelStore, AppendsAndFlags) {
    const auto dir = fixtures::temp_dir("labels_flags");
    LabelStore store(dir / "l.jsonl", fixed_clock(5));
    EXPECT_FALSE(store.labeled("a"));
    const auto r = store.add("a", 1, "u", LabelSource::human);
    EXPECT_EQ(r.timestamp, "2023-11-14T22:13:25Z");
    EXPECT_TRUE(store.labeled("a"));
    EXPECT_FALSE(store.labeled("ab"));
    EXPECT_FALSE(store.labeled(""));
    EXPECT_THROW(store.add("a", 3, "u"), Error);
    EXPECT_THROW(store.add("", 1, "u"), Error);
    EXPECT_EQ(export_jsonl(store.active()), to_json(r).dump() + "\n");
    std::filesystem::remove_all(dir);
}

TEST(LabelStore, CorruptFileIsReported) {
    const auto dir = fixtures::temp_dir("labels_corrupt");
    write_file(dir / "l.jsonl", "{\"target\":\"a\"}\n");
    EXPECT_THROW(LabelStore(dir / "l.jsonl"), Error);
    std::filesystem::remove_all(dir);
}
