#include "ropinn/errors.hpp"
#include "ropinn/objectives.hpp"
#include "ropinn/pde.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>

namespace ropinn {

MetricsReport evaluate_metrics(const PdeProblem& problem, const ModelConfig& config,
                               const FlatParams& params, const CollocationSet& test_mesh) {
  MetricsReport r;
  {
    ad::Tape tape;
    const BoundModel model = bind(tape, config, params);
    ObjectiveSpec unit;
    unit.kind = ObjectiveKind::point;
    const LossValues v = values(point_loss(tape, problem, model, test_mesh, unit));
    r.train_loss = v.total;
    r.loss_eq = v.equation;
    r.loss_ic = v.initial;
    r.loss_bc = v.boundary;
  }
  const Eigen::RowVectorXd pred = forward(config, params, test_mesh.interior);
  const RelativeErrors e = relative_errors(pred, problem.exact(test_mesh.interior));
  r.rmae = e.rmae;
  r.rmse = e.rmse;
  return r;
}

void write_prediction_csv(const std::filesystem::path& path, const PdeProblem& problem,
                          const ModelConfig& config, const FlatParams& params,
                          const CollocationSet& mesh) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Eigen::RowVectorXd pred = forward(config, params, mesh.interior);
  const Eigen::RowVectorXd truth = problem.exact(mesh.interior);
  out << std::setprecision(17) << "x,t,u_pred,u_true\n";
  for (Eigen::Index i = 0; i < mesh.interior.cols(); ++i) {
    out << mesh.interior(0, i) << ',' << mesh.interior(1, i) << ',' << pred[i] << ',' << truth[i]
        << '\n';
  }
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j = {{"train_loss", r.train_loss}, {"loss_eq", r.loss_eq},
                      {"loss_ic", r.loss_ic},       {"loss_bc", r.loss_bc},
                      {"rmae", r.rmae},             {"rmse", r.rmse}};
  return j.dump(2);
}

} // namespace ropinn
