#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <tuple>

#include "evidenceflow/job.hpp"

using namespace evidenceflow;
using namespace std::chrono;

namespace {

JobSpec sample_job() {
  JobSpec j;
  j.job_id = "ab12";
  j.tool = "bulk_extractor";
  j.source = "/srv/cases/C-17/hdd1/image/hdd1.raw";
  j.source_root = "/srv/cases/C-17/hdd1/image";
  j.output = "/srv/cases/C-17/hdd1/prep/bulk_extractor";
  j.case_id = "C-17";
  j.evidence_name = "hdd1";
  j.requested_by = "inv042";
  j.created_utc = sys_days{2014y / July / 2} + hours{0} + minutes{40};
  j.seq = 3;
  return j;
}

std::string random_text(std::mt19937_64& rng, bool allow_empty) {
  static const std::string alphabet =
      "abcXYZ019 _-./=:{}\t\xc3\xa9";  // includes '=' and a UTF-8 sequence
  std::uniform_int_distribution<int> len(allow_empty ? 0 : 1, 24);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
  if (!allow_empty && s.find_first_not_of(" \t") == std::string::npos) s = "x" + s;
  return s;
}

std::string random_token(std::mt19937_64& rng) {
  static const std::string alphabet = "abcdefXYZ0123456789_.-";
  std::uniform_int_distribution<int> len(1, 16);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
  if (s.front() == '.') s.front() = 'x';
  return s;
}

JobSpec random_job(std::mt19937_64& rng) {
  JobSpec j;
  j.job_id = random_token(rng);
  j.tool = random_token(rng);
  j.source = "/" + random_text(rng, false);
  j.source_root = "/" + random_text(rng, false);
  j.output = "/" + random_text(rng, false);
  j.case_id = random_text(rng, false);
  j.evidence_name = random_text(rng, false);
  j.requested_by = random_text(rng, false);
  j.created_utc = UtcTime{seconds{std::uniform_int_distribution<long long>(0, 4'000'000'000LL)(rng)}};
  j.seq = std::uniform_int_distribution<std::uint64_t>(0, kMaxSeq)(rng);
  const int params = std::uniform_int_distribution<int>(0, 4)(rng);
  for (int i = 0; i < params; ++i)
    j.params.emplace_back("k" + std::to_string(i) + random_token(rng), random_text(rng, false));
  return j;
}

}  // namespace

TEST(JobFile, RendersFixedKeyOrder) {
  const auto text = render_job_file(sample_job());
  EXPECT_EQ(text,
            "version=1\n"
            "job_id=ab12\n"
            "tool=bulk_extractor\n"
            "source=/srv/cases/C-17/hdd1/image/hdd1.raw\n"
            "source_root=/srv/cases/C-17/hdd1/image\n"
            "output=/srv/cases/C-17/hdd1/prep/bulk_extractor\n"
            "case_id=C-17\n"
            "evidence_name=hdd1\n"
            "requested_by=inv042\n"
            "created_utc=2014-07-02T00:40:00Z\n"
            "seq=3\n");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 11);
}

TEST(JobFile, ParamsFollowInInsertionOrder) {
  auto j = sample_job();
  j.params = {{"zeta", "1"}, {"alpha", "a=b"}};
  const auto text = render_job_file(j);
  EXPECT_NE(text.find("seq=3\nparam.zeta=1\nparam.alpha=a=b\n"), std::string::npos);
  EXPECT_EQ(parse_job_file(text), j);
}

TEST(JobFile, RenderIsDeterministic) {
  EXPECT_EQ(render_job_file(sample_job()), render_job_file(sample_job()));
}

TEST(JobFile, RoundTripProperty) {
  std::mt19937_64 rng(20140701);
  for (int i = 0; i < 1000; ++i) {
    const auto j = random_job(rng);
    ASSERT_NO_THROW(validate_job(j));
    EXPECT_EQ(parse_job_file(render_job_file(j)), j) << render_job_file(j);
  }
}

TEST(JobFile, MissingKey) {
  auto text = render_job_file(sample_job());
  const auto pos = text.find("source=");
  text.erase(pos, text.find('\n', pos) - pos + 1);
  try {
    parse_job_file(text);
    FAIL();
  } catch (const JobFileError& e) {
    EXPECT_EQ(e.kind(), JobFileError::Kind::MissingKey);
    EXPECT_EQ(e.key(), "source");
  }
}

TEST(JobFile, BadVersion) {
  auto text = render_job_file(sample_job());
  text.replace(0, 9, "version=2");
  try {
    parse_job_file(text);
    FAIL();
  } catch (const JobFileError& e) {
    EXPECT_EQ(e.kind(), JobFileError::Kind::BadVersion);
  }
}

TEST(JobFile, MalformedLineCarriesLineNumber) {
  auto text = render_job_file(sample_job());
  text += "garbage without separator\n";
  try {
    parse_job_file(text);
    FAIL();
  } catch (const JobFileError& e) {
    EXPECT_EQ(e.kind(), JobFileError::Kind::MalformedLine);
    EXPECT_EQ(e.line(), 12u);
  }
}

TEST(JobFile, NonNumericSeqIsMalformed) {
  auto text = render_job_file(sample_job());
  text.replace(text.find("seq=3"), 5, "seq=x");
  try {
    parse_job_file(text);
    FAIL();
  } catch (const JobFileError& e) {
    EXPECT_EQ(e.kind(), JobFileError::Kind::MalformedLine);
  }
}

TEST(JobFile, ValidationRejectsLineBreaks) {
  auto j = sample_job();
  j.case_id = "a\nb";
  EXPECT_THROW(validate_job(j), InvalidJob);
  j = sample_job();
  j.source.clear();
  EXPECT_THROW(validate_job(j), InvalidJob);
  j = sample_job();
  j.tool = "two words";
  EXPECT_THROW(validate_job(j), InvalidJob);
}

TEST(JobFilename, Format) {
  EXPECT_EQ(job_filename(sample_job()), "20140702T004000Z_00000003_ab12.job");
}

TEST(JobFilename, PaddingOrdersSequence) {
  std::vector<std::string> names;
  for (std::uint64_t seq : {10u, 1u, 2u}) {
    auto j = sample_job();
    j.seq = seq;
    names.push_back(job_filename(j));
  }
  std::sort(names.begin(), names.end());
  EXPECT_NE(names[0].find("_00000001_"), std::string::npos);
  EXPECT_NE(names[1].find("_00000002_"), std::string::npos);
  EXPECT_NE(names[2].find("_00000010_"), std::string::npos);
}

TEST(JobFilename, SortMatchesTupleOrder) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<long long> secs(1'400'000'000LL, 1'400'000'100LL);
  std::uniform_int_distribution<std::uint64_t> seqs(0, 50);
  std::vector<JobSpec> jobs;
  for (int i = 0; i < 300; ++i) {
    auto j = sample_job();
    j.created_utc = UtcTime{seconds{secs(rng)}};
    j.seq = seqs(rng);
    j.job_id = make_job_id();
    jobs.push_back(j);
  }
  auto by_name = jobs, by_tuple = jobs;
  std::sort(by_name.begin(), by_name.end(),
            [](const JobSpec& a, const JobSpec& b) { return job_filename(a) < job_filename(b); });
  std::sort(by_tuple.begin(), by_tuple.end(), [](const JobSpec& a, const JobSpec& b) {
    return std::tie(a.created_utc, a.seq, a.job_id) < std::tie(b.created_utc, b.seq, b.job_id);
  });
  EXPECT_EQ(by_name, by_tuple);
}

TEST(JobId, HexAndUnique) {
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto id = make_job_id();
    EXPECT_EQ(id.size(), 16u);
    EXPECT_EQ(id.find_first_not_of("0123456789abcdef"), std::string::npos);
    seen.insert(id);
  }
  EXPECT_EQ(seen.size(), 1000u);
}
