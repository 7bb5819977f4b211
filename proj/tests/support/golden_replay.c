/* Copyright 2026 The TinyBatt Authors. All Rights Reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Test-only replay harness: runs tb_model_run over every record of a golden
 * file and compares logits and predicted class. Usage: replay <golden.bin>.
 * Exit 0 on a full match, 1 on the first mismatch, 2 on a malformed file.
 */
#include <stdio.h>
#include <string.h>

#include "model.h"

static signed char in_buf[TB_INPUT_SIZE];
static signed char expected[TB_OUTPUT_SIZE];
static signed char actual[TB_OUTPUT_SIZE];

static int read_u32(FILE *f, unsigned long *v) {
  unsigned char b[4];
  if (fread(b, 1, 4, f) != 4) return 0;
  *v = (unsigned long)b[0] | ((unsigned long)b[1] << 8) | ((unsigned long)b[2] << 16) | ((unsigned long)b[3] << 24);
  return 1;
}

int main(int argc, char **argv) {
  FILE *f;
  char magic[4];
  unsigned long version, count, in_len, out_len, predicted, r;
  int i, got;
  if (argc != 2) {
    fprintf(stderr, "usage: %s golden.bin\n", argv[0]);
    return 2;
  }
  f = fopen(argv[1], "rb");
  if (!f) {
    fprintf(stderr, "cannot open %s\n", argv[1]);
    return 2;
  }
  if (fread(magic, 1, 4, f) != 4 || memcmp(magic, "GLD1", 4) != 0) {
    fprintf(stderr, "bad magic\n");
    return 2;
  }
  if (!read_u32(f, &version) || version != 1 || !read_u32(f, &count) || !read_u32(f, &in_len) ||
      !read_u32(f, &out_len) || in_len != TB_INPUT_SIZE || out_len != TB_OUTPUT_SIZE) {
    fprintf(stderr, "bad header\n");
    return 2;
  }
  for (r = 0; r < count; ++r) {
    if (fread(in_buf, 1, TB_INPUT_SIZE, f) != TB_INPUT_SIZE || fread(expected, 1, TB_OUTPUT_SIZE, f) != TB_OUTPUT_SIZE ||
        !read_u32(f, &predicted)) {
      fprintf(stderr, "truncated at record %lu\n", r);
      return 2;
    }
    got = tb_model_run(in_buf, actual);
    for (i = 0; i < TB_OUTPUT_SIZE; ++i) {
      if (actual[i] != expected[i]) {
        printf("mismatch: record %lu byte %d expected %d actual %d\n", r, i, expected[i], actual[i]);
        return 1;
      }
    }
    if ((unsigned long)got != predicted) {
      printf("mismatch: record %lu predicted expected %lu actual %d\n", r, predicted, got);
      return 1;
    }
  }
  if (fgetc(f) != EOF) {
    fprintf(stderr, "trailing bytes after %lu records\n", count);
    return 2;
  }
  fclose(f);
  printf("%lu records match\n", count);
  return 0;
}
