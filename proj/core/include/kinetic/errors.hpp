#pragma once

#include <stdexcept>
#include <string>

namespace kinetic {

// Base of the error taxonomy. `validation` means the inputs were rejected
// before compute started (CLI exit 2); `numerical` means a computation
// failed or left its validity domain mid-flight (CLI exit 3).
class Error : public std::runtime_error {
 public:
  enum class Category { validation, numerical };

  Error(Category cat, std::string op, const std::string& what)
      : std::runtime_error(op + ": " + what), cat_(cat), op_(std::move(op)) {}

  Category category() const noexcept { return cat_; }
  const std::string& failing_op() const noexcept { return op_; }

 private:
  Category cat_;
  std::string op_;
};

#define KINETIC_ERROR_TYPE(Name, Cat)                                     \
  class Name : public Error {                                             \
   public:                                                                \
    Name(const std::string& op, const std::string& what)                  \
        : Error(Error::Category::Cat, op, what) {}                        \
  }

// distributions
KINETIC_ERROR_TYPE(NonFiniteDensity, validation);
KINETIC_ERROR_TYPE(DegenerateDirection, validation);
KINETIC_ERROR_TYPE(OutOfGrid, validation);

// pointprocess
KINETIC_ERROR_TYPE(OverflowingCount, validation);
KINETIC_ERROR_TYPE(SupportEscapesBall, validation);

// potentials
KINETIC_ERROR_TYPE(SingularOrigin, validation);
KINETIC_ERROR_TYPE(DivergentTransform, numerical);

// forcefield
KINETIC_ERROR_TYPE(ParticleOverlap, numerical);
KINETIC_ERROR_TYPE(StepTooCoarse, validation);
KINETIC_ERROR_TYPE(NonIntegrableKernel, numerical);

// dielectric
KINETIC_ERROR_TYPE(OutsideAnalyticStrip, validation);
KINETIC_ERROR_TYPE(GridTooCoarse, numerical);
KINETIC_ERROR_TYPE(AtPole, validation);
KINETIC_ERROR_TYPE(AtDielectricZero, numerical);
KINETIC_ERROR_TYPE(UnstableMedium, numerical);
KINETIC_ERROR_TYPE(InversionNotConverged, numerical);

// coefficients
KINETIC_ERROR_TYPE(SingularRelativeVelocity, validation);
KINETIC_ERROR_TYPE(NonPSDDiffusion, numerical);

// langevin
KINETIC_ERROR_TYPE(ClosureBreakdown, numerical);
KINETIC_ERROR_TYPE(EnergyDriftExceeded, numerical);
KINETIC_ERROR_TYPE(BudgetExceeded, validation);

// cli / config plumbing
KINETIC_ERROR_TYPE(ConfigError, validation);

#undef KINETIC_ERROR_TYPE

}  // namespace kinetic
