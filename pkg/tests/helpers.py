"""Plain helpers shared by test modules."""

from __future__ import annotations

from prodtax.corpus import Product

# Rows in the style of the retailer catalog (title, category, subcategory).
CATALOG_ROWS = [
    ("Bounty 57 gram", "Snack", "Chocolate"),
    ("Ülker Çikolatalı Gofret 36 gram", "Snack", "Wafer"),
    ("İçim Süt 1 litre", "Milk & Breakfast", "Milk"),
    ("Dr. Oetker Puding Kakaolu", "Milk & Breakfast", "Pudding"),
    ("Pınar Süzme Peynir 500 gram", "Milk & Breakfast", "Cheese"),
]


def make_products(pairs, titles=None) -> list[Product]:
    """Products from (category, subcategory) pairs with generated titles."""
    out = []
    for i, (cat, sub) in enumerate(pairs):
        title = titles[i] if titles else f"item {sub} {i}"
        out.append(Product(str(i), title, cat, sub))
    return out
