/* Cross-correlation row sums for the ZNCC search kernel.
 *
 * Computes, for one patch and one vertical offset, the raw cross sums
 * between the reference patch and the frame window at every horizontal
 * offset dx in [-radius, radius] simultaneously.  The innermost loop runs
 * over dx with unit stride on the frame row; compilers only vectorize it
 * well when the trip count is a compile-time constant, so the common odd
 * window sides get macro-generated specializations and everything else
 * falls back to a generic runtime-sided loop.
 */
#ifndef VSEG_NATIVE_IMPL_H
#define VSEG_NATIVE_IMPL_H

#include <stddef.h>

#define VSEG_MAX_SIDE 63

#define VSEG_DEFINE_CROSS(NAME, SIDE)                                         \
static void NAME(const float* restrict frame, const float* restrict ref,      \
                 int w, int px, int py, int fy0, int patch,                   \
                 float* restrict acc) {                                       \
    float buf[SIDE];                                                          \
    for (int dx = 0; dx < SIDE; dx++) buf[dx] = 0.0f;                         \
    for (int yy = 0; yy < patch; yy++) {                                      \
        const float* frow = frame + (size_t)(fy0 + yy) * (size_t)w            \
                            + px - (SIDE - 1) / 2;                            \
        const float* rrow = ref + (size_t)(py + yy) * (size_t)w + px;         \
        for (int xx = 0; xx < patch; xx++) {                                  \
            float rv = rrow[xx];                                              \
            for (int dx = 0; dx < SIDE; dx++)                                 \
                buf[dx] += frow[xx + dx] * rv;                                \
        }                                                                     \
    }                                                                         \
    for (int dx = 0; dx < SIDE; dx++) acc[dx] = buf[dx];                      \
}

VSEG_DEFINE_CROSS(vseg_cross3, 3)
VSEG_DEFINE_CROSS(vseg_cross5, 5)
VSEG_DEFINE_CROSS(vseg_cross7, 7)
VSEG_DEFINE_CROSS(vseg_cross9, 9)
VSEG_DEFINE_CROSS(vseg_cross11, 11)
VSEG_DEFINE_CROSS(vseg_cross13, 13)
VSEG_DEFINE_CROSS(vseg_cross15, 15)
VSEG_DEFINE_CROSS(vseg_cross17, 17)
VSEG_DEFINE_CROSS(vseg_cross19, 19)
VSEG_DEFINE_CROSS(vseg_cross21, 21)

static void vseg_cross_generic(const float* restrict frame,
                               const float* restrict ref, int w,
                               int px, int py, int fy0, int patch, int side,
                               float* restrict acc) {
    float buf[VSEG_MAX_SIDE];
    for (int dx = 0; dx < side; dx++) buf[dx] = 0.0f;
    for (int yy = 0; yy < patch; yy++) {
        const float* frow = frame + (size_t)(fy0 + yy) * (size_t)w
                            + px - (side - 1) / 2;
        const float* rrow = ref + (size_t)(py + yy) * (size_t)w + px;
        for (int xx = 0; xx < patch; xx++) {
            float rv = rrow[xx];
            for (int dx = 0; dx < side; dx++)
                buf[dx] += frow[xx + dx] * rv;
        }
    }
    for (int dx = 0; dx < side; dx++) acc[dx] = buf[dx];
}

static void vseg_cross_sums(const float* frame, const float* ref, int w,
                            int px, int py, int fy0, int patch, int side,
                            float* acc) {
    switch (side) {
        case 3:  vseg_cross3(frame, ref, w, px, py, fy0, patch, acc); break;
        case 5:  vseg_cross5(frame, ref, w, px, py, fy0, patch, acc); break;
        case 7:  vseg_cross7(frame, ref, w, px, py, fy0, patch, acc); break;
        case 9:  vseg_cross9(frame, ref, w, px, py, fy0, patch, acc); break;
        case 11: vseg_cross11(frame, ref, w, px, py, fy0, patch, acc); break;
        case 13: vseg_cross13(frame, ref, w, px, py, fy0, patch, acc); break;
        case 15: vseg_cross15(frame, ref, w, px, py, fy0, patch, acc); break;
        case 17: vseg_cross17(frame, ref, w, px, py, fy0, patch, acc); break;
        case 19: vseg_cross19(frame, ref, w, px, py, fy0, patch, acc); break;
        case 21: vseg_cross21(frame, ref, w, px, py, fy0, patch, acc); break;
        default: vseg_cross_generic(frame, ref, w, px, py, fy0, patch, side, acc);
    }
}

#endif /* VSEG_NATIVE_IMPL_H */
