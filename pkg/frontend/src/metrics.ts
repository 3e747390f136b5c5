// Metrics panel model: the panel mirrors the service JSON exactly, so the
// row values are the raw payload values stringified without reformatting.

import type { MetricsPayload } from "./api.js";

export type MetricsRow = { key: string; label: string; value: string };

const LABELS: Array<[string, string]> = [
  ["ssim", "SSIM"],
  ["psnr_y", "PSNR (luma, dB)"],
  ["psnr_r", "PSNR R"],
  ["psnr_g", "PSNR G"],
  ["psnr_b", "PSNR B"],
  ["ncc", "NCC"],
  ["rmse", "RMSE"],
  ["ae_total", "AE total"],
  ["ae_percent", "AE %"],
  ["contrast_ratio", "Contrast ratio"],
];

export function metricsRows(payload: MetricsPayload): MetricsRow[] {
  return LABELS.filter(([key]) => key in payload).map(([key, label]) => ({
    key,
    label,
    value: String(payload[key]),
  }));
}
