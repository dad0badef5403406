#include <gtest/gtest.h>

#include "support.hpp"

using namespace madeasd;
using testing_support::TempDir;

namespace {

std::vector<SubjectRecord> with_field(DemographicField f, std::vector<std::optional<double>> values) {
  std::vector<SubjectRecord> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i].subject_id = "s" + std::to_string(i);
    for (std::size_t k = 0; k < kDemographicCount; ++k) out[i].demographics.values[k] = 1.0;
    out[i].demographics[f] = values[i];
  }
  return out;
}

}  // namespace

TEST(Phenotype, LabelCodesAndMissingCells) {
  TempDir dir("pheno");
  text::write_file(dir / "p.csv",
                   "SUB_ID,DX_GROUP,AGE_AT_SCAN,SEX,HANDEDNESS_CATEGORY,FIQ,SITE_ID\n"
                   "50001,1,12.5,1,R,,NYU\n"
                   "50002,2,20,2,L,110,UM\n"
                   "50003,2,-9999,F,Ambi,abc,UM\n");
  const auto r = ingest_phenotype(dir / "p.csv");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].label, Label::ASD);
  EXPECT_EQ(r[1].label, Label::TC);
  EXPECT_EQ(r[0].site, "NYU");
  EXPECT_FALSE(r[0].demographics[DemographicField::Fiq]);
  EXPECT_DOUBLE_EQ(*r[0].demographics[DemographicField::Age], 12.5);
  EXPECT_DOUBLE_EQ(*r[0].demographics[DemographicField::Handedness], 3.0);
  EXPECT_DOUBLE_EQ(*r[1].demographics[DemographicField::Handedness], 1.0);
  EXPECT_DOUBLE_EQ(*r[2].demographics[DemographicField::Handedness], 2.0);
  EXPECT_DOUBLE_EQ(*r[2].demographics[DemographicField::Sex], 2.0);
  EXPECT_FALSE(r[2].demographics[DemographicField::Age]);
  EXPECT_FALSE(r[2].demographics[DemographicField::Fiq]);
}

TEST(Phenotype, CustomLabelMapping) {
  TempDir dir("pheno_map");
  text::write_file(dir / "p.tsv", "id\tdx\nA\tautism\nB\tcontrol\n");
  PhenotypeSchema s;
  s.subject_id = "id";
  s.label = "dx";
  s.label_codes = {{"autism", Label::ASD}, {"control", Label::TC}};
  const auto r = ingest_phenotype(dir / "p.tsv", s);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].label, Label::ASD);
  EXPECT_EQ(r[1].label, Label::TC);
}

TEST(Phenotype, DuplicateIdsNamed) {
  TempDir dir("pheno_dup");
  std::string body = "SUB_ID,DX_GROUP\n";
  for (int i = 0; i < 8; ++i) body += "S" + std::to_string(i) + ",1\n";
  body += "S3,2\nS5,2\n";
  text::write_file(dir / "p.csv", body);
  try {
    ingest_phenotype(dir / "p.csv");
    FAIL() << "expected duplicate-id error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("S3"), std::string::npos);
    EXPECT_NE(msg.find("S5"), std::string::npos);
  }
}

TEST(Phenotype, MissingFileAndColumns) {
  TempDir dir("pheno_err");
  EXPECT_THROW(ingest_phenotype(dir / "nope.csv"), ValidationError);
  text::write_file(dir / "p.csv", "SUB_ID,AGE\n1,10\n");
  EXPECT_THROW(ingest_phenotype(dir / "p.csv"), ValidationError);
}

TEST(Imputation, MeansOfAvailableValues) {
  auto r = impute_demographics(with_field(DemographicField::Age, {10.0, 20.0, std::nullopt}));
  EXPECT_DOUBLE_EQ(*r[2].demographics[DemographicField::Age], 15.0);
  EXPECT_DOUBLE_EQ(*r[0].demographics[DemographicField::Age], 10.0);

  r = impute_demographics(with_field(DemographicField::Fiq, {100.0, std::nullopt, 110.0, std::nullopt}));
  EXPECT_DOUBLE_EQ(*r[1].demographics[DemographicField::Fiq], 105.0);
  EXPECT_DOUBLE_EQ(*r[3].demographics[DemographicField::Fiq], 105.0);
}

TEST(Imputation, IdentityWithoutMissingValues) {
  const auto in = with_field(DemographicField::Sex, {1.0, 2.0, 1.0});
  EXPECT_EQ(impute_demographics(in), in);
}

TEST(Imputation, FieldMissingEverywhereIsAnError) {
  EXPECT_THROW(impute_demographics(with_field(DemographicField::Fiq, {std::nullopt, std::nullopt})), ValidationError);
}

TEST(Timeseries, ReadsHeaderedAndPlainFiles) {
  TempDir dir("ts");
  text::write_file(dir / "a.csv", "r0,r1,r2\n1,2,3\n4,5,6\n");
  text::write_file(dir / "b.txt", "# comment\n1 2 3\n4 5 6\n7 8 9\n");
  const auto a = read_timeseries(dir / "a.csv", 3);
  EXPECT_EQ(a.n_timepoints(), 2);
  EXPECT_DOUBLE_EQ(a.values(1, 2), 6.0);
  const auto b = read_timeseries(dir / "b.txt", 3);
  EXPECT_EQ(b.n_timepoints(), 3);
  EXPECT_DOUBLE_EQ(b.values(2, 0), 7.0);
}

TEST(Timeseries, RejectsBadShapesAndCells) {
  TempDir dir("ts_bad");
  text::write_file(dir / "a.csv", "1,2\n3,4\n");
  EXPECT_THROW(read_timeseries(dir / "a.csv", 3), ValidationError);
  text::write_file(dir / "b.csv", "1,2,3\n3,x,4\n");
  EXPECT_THROW(read_timeseries(dir / "b.csv", 3), ValidationError);
  text::write_file(dir / "c.csv", "1,2,3\n");
  EXPECT_THROW(read_timeseries(dir / "c.csv", 3), ValidationError);
}

TEST(Timeseries, IngestDropsMissingAndBrokenSubjects) {
  TempDir dir("ingest");
  const AtlasSpec atlas{"T", 3, 1, {}};
  std::vector<SubjectRecord> recs(4);
  for (int i = 0; i < 4; ++i) recs[static_cast<std::size_t>(i)].subject_id = "s" + std::to_string(i);
  text::write_file(dir / "T" / "s0.csv", "1,2,3\n2,1,0\n5,5,4\n");
  text::write_file(dir / "T" / "s1.csv", "1,2\n2,1\n");
  text::write_file(dir / "T" / "s3.csv", "1,2,3\n2,1,0\n");
  const auto out = ingest_timeseries(dir.path(), atlas, recs);
  ASSERT_EQ(out.records.size(), 2u);
  EXPECT_EQ(out.records[0].subject_id, "s0");
  EXPECT_EQ(out.records[1].subject_id, "s3");
  ASSERT_EQ(out.dropped.size(), 2u);
  EXPECT_EQ(out.dropped[0].subject_id, "s1");
  EXPECT_EQ(out.dropped[1].subject_id, "s2");
}

TEST(Synthetic, DeterministicAndBalanced) {
  SyntheticOptions o;
  o.n_subjects = 40;
  o.atlases = {reduced_atlas("CC", 10), reduced_atlas("AAL", 8)};
  o.seed = 7;
  const auto a = generate_synthetic(o), b = generate_synthetic(o);
  ASSERT_EQ(a.records.size(), 40u);
  EXPECT_EQ(a.records, b.records);
  int asd = 0;
  for (const auto& r : a.records) {
    asd += r.label == Label::ASD;
    EXPECT_EQ(r.series.size(), 2u);
    EXPECT_EQ(r.series.at("CC").n_rois(), 10);
    EXPECT_EQ(r.series.at("AAL").n_rois(), 8);
  }
  EXPECT_EQ(asd, 20);
  o.seed = 8;
  EXPECT_NE(generate_synthetic(o).records, a.records);
}

TEST(Synthetic, WriteThenLoadRoundTrips) {
  TempDir dir("synth");
  SyntheticOptions o;
  o.n_subjects = 12;
  o.atlases = {reduced_atlas("CC", 6)};
  o.seed = 3;
  const auto ds = generate_synthetic(o);
  write_dataset(dir.path(), ds);
  const auto loaded = load_dataset(dir.path(), o.atlases);
  ASSERT_EQ(loaded.records.size(), 12u);
  EXPECT_TRUE(loaded.dropped.empty());
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(loaded.records[i].subject_id, ds.records[i].subject_id);
    EXPECT_EQ(loaded.records[i].label, ds.records[i].label);
    EXPECT_EQ(loaded.records[i].site, ds.records[i].site);
    EXPECT_EQ(loaded.records[i].demographics, ds.records[i].demographics);
    EXPECT_EQ(loaded.records[i].series.at("CC"), ds.records[i].series.at("CC"));
  }
}

TEST(Atlas, ReferenceSizesAndSidecar) {
  EXPECT_EQ(AtlasSpec::cc200().feature_dim(), 19900);
  EXPECT_EQ(AtlasSpec::aal().feature_dim(), 6670);
  EXPECT_EQ(AtlasSpec::cc200().retain_count, 3000);
  EXPECT_EQ(AtlasSpec::ez().retain_count, 1000);
  EXPECT_EQ(retain_count_for_percent(15.0, 19900), 2985);
  AtlasSpec bad{"X", 4, 7, {}};
  EXPECT_THROW(bad.validate(), ValidationError);

  TempDir dir("sidecar");
  text::write_file(dir / "s.csv", "roi_index,name,x,y,z\n0,Left,1,2,3\n1,,4,5,6\n2,Right,,,\n");
  const auto rois = read_atlas_sidecar(dir / "s.csv", 3);
  EXPECT_EQ(rois[0].name, "Left");
  ASSERT_TRUE(rois[1].center_mm);
  EXPECT_DOUBLE_EQ((*rois[1].center_mm)[2], 6.0);
  EXPECT_FALSE(rois[2].center_mm);
  EXPECT_THROW(read_atlas_sidecar(dir / "s.csv", 2), ValidationError);
}
