#ifndef DDP_H
#define DDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdpStatus {
  DdpStatus_Ok = 0,
  DdpStatus_NullPointer = 1,
  DdpStatus_InvalidArgument = 2,
  DdpStatus_Shape = 3,
  DdpStatus_Format = 4,
  DdpStatus_Io = 5,
  DdpStatus_Domain = 6,
  DdpStatus_Numeric = 7,
  DdpStatus_Panic = 8,
  DdpStatus_Other = 9,
} DdpStatus;

/*
 Opaque synthetic scene.
 */
typedef struct DdpScene DdpScene;

/*
 Opaque `f32` tensor of shape channels × height × width.
 */
typedef struct DdpTensor DdpTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message, NUL-terminated and
 truncated to `len` bytes, into `buf`. Returns the full message length
 excluding the terminator, so a second call can size the buffer.
 */
size_t ddp_last_error(char *buf, size_t len);

/*
 Zero-filled tensor.
 */
enum DdpStatus ddp_tensor_zeros(size_t channels,
                                size_t height,
                                size_t width,
                                struct DdpTensor **out);

/*
 Tensor copied from `channels * height * width` row-major floats.
 */
enum DdpStatus ddp_tensor_from_data(const float *data,
                                    size_t channels,
                                    size_t height,
                                    size_t width,
                                    struct DdpTensor **out);

void ddp_tensor_free(struct DdpTensor *t);

enum DdpStatus ddp_tensor_dims(const struct DdpTensor *t,
                               size_t *channels,
                               size_t *height,
                               size_t *width);

/*
 Borrowed pointer to the row-major data; valid until the handle is freed.
 Null for a null handle or an empty tensor.
 */
const float *ddp_tensor_data(const struct DdpTensor *t);

/*
 Reads an `f32` DDPT blob of rank 3.
 */
enum DdpStatus ddp_tensor_read(const char *path, struct DdpTensor **out);

enum DdpStatus ddp_tensor_write(const struct DdpTensor *t, const char *path);

/*
 Align-corners-false bilinear resize to `height × width`.
 */
enum DdpStatus ddp_tensor_resize(const struct DdpTensor *t,
                                 size_t height,
                                 size_t width,
                                 struct DdpTensor **out);

/*
 PSNR in dB, capped for identical inputs.
 */
enum DdpStatus ddp_psnr(const struct DdpTensor *a,
                        const struct DdpTensor *b,
                        double peak,
                        double *out);

/*
 Mean SSIM over channels and valid 11×11 windows.
 */
enum DdpStatus ddp_ssim(const struct DdpTensor *a,
                        const struct DdpTensor *b,
                        double peak,
                        double *out);

/*
 Seeded synthetic scene with `base × base` pixels and default channels.
 */
enum DdpStatus ddp_scene_generate(uint64_t seed,
                                  size_t n_instances,
                                  double sparsity,
                                  size_t base,
                                  struct DdpScene **out);

/*
 Reads a scene from its directory or its `scene.json`.
 */
enum DdpStatus ddp_scene_read(const char *path, struct DdpScene **out);

enum DdpStatus ddp_scene_write(const struct DdpScene *s, const char *dir);

void ddp_scene_free(struct DdpScene *s);

/*
 Instance count, or -1 for a null handle.
 */
int ddp_scene_num_instances(const struct DdpScene *s);

/*
 Foreground fraction, or NaN for a null handle.
 */
double ddp_scene_sparsity(const struct DdpScene *s);

/*
 Runs the direct pipeline with seeded random weights and default settings,
 returning the 75-channel IUV logits at 1/4 scale.
 */
enum DdpStatus ddp_scene_run_direct(const struct DdpScene *s,
                                    uint64_t weight_seed,
                                    struct DdpTensor **iuv_out);

/*
 Library version, static NUL-terminated string.
 */
const char *ddp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDP_H */
