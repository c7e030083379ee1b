// Runs the tsf binary as a subprocess.
#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("tsf_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunResult tsf(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string("\"") + TSF_CLI_PATH + "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

fs::path data_file() {
  const fs::path p = scratch() / "series.csv";
  if (fs::exists(p)) return p;
  std::ofstream out(p);
  out << "region,year,week,value\n";
  for (const std::string region : {"alpha", "beta"}) {
    int year = 2011, week = 1;
    for (int t = 0; t < 160; ++t) {
      const double v = (region == "alpha" ? 4.0 : 2.0) * (1.5 + std::sin(2.0 * M_PI * t / 52.0)) + 0.1 * std::cos(t);
      out << region << ',' << year << ',' << week << ',' << v << '\n';
      if (++week > 52) {
        week = 1;
        ++year;
      }
    }
  }
  return p;
}

const std::string kSmall =
    " --set d_model=8 --set d_ff=16 --set n_layers=1 --set n_heads=2 --set lstm_layers=6,4"
    " --set seq2seq_dense=4 --set seq2seq_gru=6 --set arima_p=2 --set arima_q=1 --epochs 2";

std::string train(const std::string& model, const std::string& out, const std::string& extra = "") {
  const fs::path dir = scratch() / out;
  const auto r = tsf("train --model " + model + " --data " + data_file().string() + " --out " + dir.string() + kSmall +
                     " " + extra);
  EXPECT_EQ(r.code, 0) << r.err;
  return dir.string();
}

TEST(Cli, TrainWritesArtifactsDeterministically) {
  const fs::path dir = train("transformer", "tr");
  std::vector<std::string> first;
  const std::vector<std::string> files{"checkpoint", "loss.csv", "manifest", "config.txt"};
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(dir / f)) << f;
    first.push_back(slurp(dir / f));
  }
  train("transformer", "tr");
  for (std::size_t i = 0; i < files.size(); ++i) EXPECT_EQ(slurp(dir / files[i]), first[i]) << files[i];
  EXPECT_EQ(first[1].substr(0, 11), "epoch,loss\n");
}

TEST(Cli, InputFileIsNotModified) {
  const std::string before = slurp(data_file());
  train("arima", "ar_in");
  EXPECT_EQ(slurp(data_file()), before);
}

TEST(Cli, EvaluateIsRepeatable) {
  const std::string dir = train("lstm", "lstm_ev");
  for (const char* out : {"ev1", "ev2"}) {
    const auto r = tsf("evaluate --checkpoint " + dir + " --data " + data_file().string() + " --out " +
                       (scratch() / out).string());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"metrics.csv", "predictions.csv", "summary.txt"})
    EXPECT_EQ(slurp(scratch() / "ev1" / f), slurp(scratch() / "ev2" / f)) << f;
  const std::string metrics = slurp(scratch() / "ev1" / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, 22), "region,pearson,rmse,n\n");
  EXPECT_NE(metrics.find("\nalpha,"), std::string::npos);
  EXPECT_NE(metrics.find("\nbeta,"), std::string::npos);
}

TEST(Cli, EvaluateRejectsMismatchedCheckpoint) {
  const std::string dir = train("lstm", "lstm_mm");
  auto r = tsf("evaluate --checkpoint " + dir + " --data " + data_file().string() + " --model transformer --out " +
               (scratch() / "mm").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error: schema:"), std::string::npos) << r.err;
  r = tsf("evaluate --checkpoint " + dir + " --data " + data_file().string() + " --features tde:3,1 --out " +
          (scratch() / "mm").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("arity"), std::string::npos) << r.err;
}

TEST(Cli, ForecastWritesRequestedSteps) {
  const std::string dir = train("arima", "ar_fc");
  const auto r = tsf("forecast --checkpoint " + dir + " --data " + data_file().string() + " --steps 6 --region beta --out " +
                     (scratch() / "fc").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(scratch() / "fc" / "forecast.csv");
  EXPECT_EQ(csv.substr(0, 30), "region,year,week,step,predicte");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  // 160 weeks from 2011w1 end at 2014w4
  EXPECT_NE(csv.find("beta,2014,5,1,"), std::string::npos) << csv;
}

TEST(Cli, CompareAndSweep) {
  const fs::path out = scratch() / "cmp";
  auto r = tsf("compare --data " + data_file().string() + " --out " + out.string() + kSmall);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(out / "compare.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.substr(0, 54), "model,pearson,pearson_change_pct,rmse,rmse_change_pct\n");

  const fs::path sw = scratch() / "sweep";
  r = tsf("tde-sweep --data " + data_file().string() + " --dims 2,3,300 --out " + sw.string() + kSmall);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string rows = slurp(sw / "tde_sweep.csv");
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 4);
  EXPECT_NE(rows.find("\n300,ERROR"), std::string::npos) << rows;
  EXPECT_NE(slurp(sw / "summary.txt").find("dimension 300:"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const std::string data = " --data " + data_file().string() + " --out " + (scratch() / "x").string();
  auto r = tsf("train --model gbm" + data);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("transformer"), std::string::npos);
  EXPECT_NE(r.err.find("arima"), std::string::npos);
  EXPECT_EQ(tsf("train --set colour=blue" + data).code, 2);
  EXPECT_EQ(tsf("train --bogus-flag" + data).code, 2);
  EXPECT_EQ(tsf("tde-sweep --dims 2,2" + data).code, 2);
  EXPECT_EQ(tsf("").code, 2);
  r = tsf("train --data " + (scratch() / "missing.csv").string() + " --out " + (scratch() / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: io:", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_EQ(tsf("evaluate --checkpoint " + (scratch() / "nope").string() + data).code, 1);
}

TEST(Cli, ConfigFileAndPrecedence) {
  const fs::path cfg = scratch() / "run.cfg";
  std::ofstream(cfg) << "# small run\nmodel = lstm\nepochs = 1\nlstm_layers = 5,3\nseed = 11\n";
  const fs::path out = scratch() / "cfg";
  const auto r = tsf("train --config " + cfg.string() + " --set epochs=3 --seed 12 --data " + data_file().string() +
                     " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(out / "config.txt");
  EXPECT_NE(text.find("model = lstm\n"), std::string::npos);
  EXPECT_NE(text.find("epochs = 3\n"), std::string::npos);
  EXPECT_NE(text.find("seed = 12\n"), std::string::npos);
  EXPECT_NE(text.find("lstm_layers = 5,3\n"), std::string::npos);
}

}  // namespace
