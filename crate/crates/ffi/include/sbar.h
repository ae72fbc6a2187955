#ifndef SBAR_H
#define SBAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum SbarStatus {
  SBAR_STATUS_OK = 0,
  SBAR_STATUS_NULL_POINTER = 1,
  SBAR_STATUS_INVALID_ARGUMENT = 2,
  SBAR_STATUS_CAPACITY = 3,
  SBAR_STATUS_SCHEDULE_MISMATCH = 4,
  SBAR_STATUS_NUMERICAL_FAILURE = 5,
  SBAR_STATUS_IO = 6,
  SBAR_STATUS_FORMAT = 7,
  SBAR_STATUS_PANIC = 8,
} SbarStatus;

/*
 Prior covariance over the ports.
 */
typedef struct SbarKernel SbarKernel;

/*
 Port schedule and reconstruction weights.
 */
typedef struct SbarPlan SbarPlan;

/*
 Interleaved complex number, layout-compatible with `double _Complex`.
 */
typedef struct SbarComplex {
  double re;
  double im;
} SbarComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or an empty string.
 The pointer stays valid until the next `sbar_*` call on the same thread.
 */
const char *sbar_last_error(void);

/*
 Squared-exponential kernel `α² exp(-|x - x'|² / η²)` over a uniform array.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum SbarStatus sbar_kernel_exponential(size_t num_ports,
                                        double wavelength,
                                        double aperture,
                                        double alpha_sq,
                                        double eta_sq,
                                        struct SbarKernel **out);

/*
 Bessel kernel `α² J_ν(|x - x'| / η²)`, regularised to be positive
 semidefinite.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum SbarStatus sbar_kernel_bessel(size_t num_ports,
                                   double wavelength,
                                   double aperture,
                                   double alpha_sq,
                                   double eta_sq,
                                   uint32_t order,
                                   struct SbarKernel **out);

/*
 Kernel from a row-major `num_ports x num_ports` Hermitian matrix.

 # Safety
 `entries` must point to `num_ports * num_ports` readable values and `out`
 to writable storage for one handle.
 */
enum SbarStatus sbar_kernel_from_matrix(size_t num_ports,
                                        const struct SbarComplex *entries,
                                        struct SbarKernel **out);

/*
 Number of ports, or 0 for a null handle.

 # Safety
 `kernel` must be null or a live handle.
 */
size_t sbar_kernel_num_ports(const struct SbarKernel *kernel);

/*
 Releases a kernel. Null is ignored.

 # Safety
 `kernel` must be null or a handle not yet freed.
 */
void sbar_kernel_free(struct SbarKernel *kernel);

/*
 Greedy design of `pilots * antennas` ports and their weights.

 # Safety
 `kernel` must be a live handle and `out` writable storage for one handle.
 */
enum SbarStatus sbar_plan_design(const struct SbarKernel *kernel,
                                 size_t pilots,
                                 size_t antennas,
                                 double noise_variance,
                                 struct SbarPlan **out);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` writable storage for one
 handle.
 */
enum SbarStatus sbar_plan_load(const char *path, struct SbarPlan **out);

/*
 # Safety
 `plan` must be a live handle and `path` a NUL-terminated string.
 */
enum SbarStatus sbar_plan_save(const struct SbarPlan *plan, const char *path);

/*
 Number of scheduled ports (`P * M`), or 0 for a null handle.

 # Safety
 `plan` must be null or a live handle.
 */
size_t sbar_plan_num_pilots(const struct SbarPlan *plan);

/*
 # Safety
 `plan` must be null or a live handle.
 */
size_t sbar_plan_num_ports(const struct SbarPlan *plan);

/*
 Copies the zero-based scheduled ports, in measurement order, into `ports`.

 # Safety
 `plan` must be a live handle and `ports` must hold `len` writable values.
 */
enum SbarStatus sbar_plan_schedule(const struct SbarPlan *plan, size_t *ports, size_t len);

/*
 `ĥ = Wᴴ y` for pilots `y` received on the plan's schedule.

 # Safety
 `pilots` must hold `num_pilots` readable values and `out` `num_ports`
 writable values.
 */
enum SbarStatus sbar_plan_reconstruct(const struct SbarPlan *plan,
                                      const struct SbarComplex *pilots,
                                      size_t num_pilots,
                                      struct SbarComplex *out,
                                      size_t num_ports);

/*
 Releases a plan. Null is ignored.

 # Safety
 `plan` must be null or a handle not yet freed.
 */
void sbar_plan_free(struct SbarPlan *plan);

/*
 Expected squared reconstruction error when weights designed from `kernel`
 meet channels with covariance `true_cov`, for zero-based `ports` grouped
 into `pilots` slots of `antennas`.

 # Safety
 Both kernels must be live handles, `ports` must hold `num_ports` readable
 values and `out` must be writable.
 */
enum SbarStatus sbar_lemma1_mse(const struct SbarKernel *kernel,
                                const struct SbarKernel *true_cov,
                                const size_t *ports,
                                size_t num_ports,
                                size_t pilots,
                                size_t antennas,
                                double noise_variance,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SBAR_H */
