"""Link and credit models built on the nn package."""
