// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "expertfind_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(EXPERTFIND_CLI) + " " + args + " > " +
                          (scratch() / "stdout.txt").string() + " 2> " +
                          (scratch() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stderr_text() {
  std::ifstream in(scratch() / "stderr.txt");
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("evaluate --out x"), 1);  // --checkpoint is required
  EXPECT_EQ(run("synth --out " + (scratch() / "c").string() + " --set model.colour=red"), 1);
  EXPECT_NE(stderr_text().find("colour"), std::string::npos);
}

TEST(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(run("pretrain --corpus " + (scratch() / "missing").string() + " --out " +
                (scratch() / "p").string()),
            2);
  EXPECT_NE(stderr_text().find("expertfind"), std::string::npos);
  std::ofstream(scratch() / "bad.xml") << "<posts><row Id=\"1\" PostTypeId=\"1\"";
  EXPECT_EQ(run("ingest --posts " + (scratch() / "bad.xml").string() + " --out " +
                (scratch() / "i").string()),
            2);
}

TEST(Cli, GradcheckExitCodes) {
  EXPECT_EQ(run("gradcheck"), 0);
  EXPECT_EQ(run("gradcheck --corrupt"), 3);
}

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("--version"), 0);
}
